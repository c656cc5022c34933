// Copyright 2026 The rulekit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Group-relative advantages, the clipped surrogate objective, and a small
// trainer over a per-position categorical policy with programmatic rules.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "rulekit/error.hpp"
#include "rulekit/reward.hpp"
#include "rulekit/rng.hpp"

namespace rulekit {

enum class StdConvention { kPopulation, kSample };

enum class OptimizerKind { kSgd, kAdam };

/// (r_i - mean(r)) / (std(r) + eps) over one group.
inline std::vector<double> group_advantages(
    std::span<const double> rewards, double advantage_epsilon = 1e-9,
    StdConvention convention = StdConvention::kPopulation) {
  const std::size_t n = rewards.size();
  if (n < 2) throw ArgumentError("group_advantages needs at least 2 rewards");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double denom = convention == StdConvention::kPopulation
                           ? static_cast<double>(n)
                           : static_cast<double>(n - 1);
  const double stddev = std::sqrt(ss / denom);
  std::vector<double> adv(n);
  for (std::size_t i = 0; i < n; ++i)
    adv[i] = (rewards[i] - mean) / (stddev + advantage_epsilon);
  return adv;
}

/// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)
inline double clipped_surrogate(double ratio, double advantage,
                                double clip_epsilon) {
  if (!(ratio > 0.0)) throw ArgumentError("likelihood ratio must be > 0");
  const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

struct GrpoConfig {
  double clip_epsilon = 0.2;
  std::size_t group_size = 4;
  double advantage_epsilon = 1e-9;
  double learning_rate = 2.0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_epsilon = 1e-8;
  std::size_t steps = 500;
  std::uint64_t seed = 42;
  std::size_t prompts_per_step = 16;
  /// Optimization passes per rollout batch; >1 lets the clip engage.
  std::size_t update_epochs = 1;
  StdConvention std_convention = StdConvention::kPopulation;

  void validate() const {
    if (!(clip_epsilon > 0.0 && clip_epsilon <= 1.0))
      throw ArgumentError("clip_epsilon must lie in (0, 1]");
    if (group_size < 2) throw ArgumentError("group_size must be >= 2");
    if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be > 0");
    if (prompts_per_step == 0) throw ArgumentError("prompts_per_step must be >= 1");
    if (update_epochs == 0) throw ArgumentError("update_epochs must be >= 1");
  }
};

using Sequence = std::vector<int>;

/// Independent categorical distribution per position, parameterized by a
/// (seq_len x vocab_size) table of logits.
class ToyPolicy {
 public:
  ToyPolicy(std::size_t seq_len, std::size_t vocab_size)
      : seq_len_(seq_len), vocab_(vocab_size), logits_(seq_len * vocab_size, 0.0) {
    if (seq_len == 0 || vocab_size == 0)
      throw ArgumentError("ToyPolicy needs seq_len >= 1 and vocab_size >= 1");
  }

  std::size_t seq_len() const noexcept { return seq_len_; }
  std::size_t vocab_size() const noexcept { return vocab_; }

  double& logit(std::size_t pos, std::size_t token) {
    return logits_[pos * vocab_ + token];
  }
  double logit(std::size_t pos, std::size_t token) const {
    return logits_[pos * vocab_ + token];
  }
  std::span<double> logits() noexcept { return logits_; }
  std::span<const double> logits() const noexcept { return logits_; }

  std::vector<double> probabilities(std::size_t pos) const {
    const auto row = logits().subspan(pos * vocab_, vocab_);
    const double top = *std::max_element(row.begin(), row.end());
    std::vector<double> p(vocab_);
    double z = 0.0;
    for (std::size_t v = 0; v < vocab_; ++v) z += p[v] = std::exp(row[v] - top);
    for (auto& x : p) x /= z;
    return p;
  }

  double log_prob(std::span<const int> seq) const {
    if (seq.size() != seq_len_) throw ArgumentError("sequence length mismatch");
    double lp = 0.0;
    for (std::size_t pos = 0; pos < seq_len_; ++pos) {
      const auto row = logits().subspan(pos * vocab_, vocab_);
      const double top = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (double l : row) z += std::exp(l - top);
      lp += row[static_cast<std::size_t>(seq[pos])] - top - std::log(z);
    }
    return lp;
  }

  Sequence sample(Rng& rng) const {
    Sequence seq(seq_len_);
    for (std::size_t pos = 0; pos < seq_len_; ++pos) {
      const auto p = probabilities(pos);
      const auto tok = rng.categorical(p);
      if (tok >= vocab_) throw Error("degenerate policy: no token has mass");
      seq[pos] = static_cast<int>(tok);
    }
    return seq;
  }

  json to_json() const {
    return json{{"seq_len", seq_len_}, {"vocab_size", vocab_}, {"logits", logits_}};
  }

 private:
  std::size_t seq_len_;
  std::size_t vocab_;
  std::vector<double> logits_;
};

/// Gradient with respect to the logits table of
///   sum_i weights[i] * clipped_surrogate(pi(y_i) / pi_old(y_i), A_i, eps).
/// Samples whose clipped branch is the minimum contribute nothing.
inline std::vector<double> surrogate_gradient(const ToyPolicy& policy,
                                              std::span<const Sequence> samples,
                                              std::span<const double> logp_old,
                                              std::span<const double> advantages,
                                              std::span<const double> weights,
                                              double clip_epsilon) {
  const std::size_t n = samples.size();
  if (logp_old.size() != n || advantages.size() != n || weights.size() != n)
    throw ArgumentError("surrogate_gradient inputs have mismatched lengths");
  const std::size_t L = policy.seq_len();
  const std::size_t V = policy.vocab_size();
  std::vector<std::vector<double>> probs(L);
  for (std::size_t pos = 0; pos < L; ++pos) probs[pos] = policy.probabilities(pos);

  std::vector<double> grad(L * V, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double ratio = std::exp(policy.log_prob(samples[i]) - logp_old[i]);
    const double a = advantages[i];
    const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    if (ratio * a > clipped * a) continue;
    const double coef = weights[i] * a * ratio;
    if (coef == 0.0) continue;
    for (std::size_t pos = 0; pos < L; ++pos) {
      double* g = grad.data() + pos * V;
      for (std::size_t v = 0; v < V; ++v) g[v] -= coef * probs[pos][v];
      g[static_cast<std::size_t>(samples[i][pos])] += coef;
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Synthetic rules

struct SyntheticRule {
  std::string name;
  std::function<bool(std::span<const int>)> check;
};

namespace synthetic {

inline SyntheticRule contains_token(int token) {
  return {"contains token " + std::to_string(token),
          [token](std::span<const int> s) {
            return std::find(s.begin(), s.end(), token) != s.end();
          }};
}

inline SyntheticRule distinct_at_least(std::size_t k) {
  return {"at least " + std::to_string(k) + " distinct tokens",
          [k](std::span<const int> s) {
            return std::unordered_set<int>(s.begin(), s.end()).size() >= k;
          }};
}

inline SyntheticRule ends_with(int token) {
  return {"ends with token " + std::to_string(token),
          [token](std::span<const int> s) { return !s.empty() && s.back() == token; }};
}

inline SyntheticRule starts_with(int token) {
  return {"starts with token " + std::to_string(token),
          [token](std::span<const int> s) { return !s.empty() && s.front() == token; }};
}

}  // namespace synthetic

/// Everything the toy trainer scores against.
struct ToyEnvironment {
  std::size_t vocab_size = 20;
  std::size_t seq_len = 10;
  std::vector<SyntheticRule> rules;
  /// Stand-in for a learned reward model; zero when unset.
  std::function<double(std::span<const int>)> model_reward;
  RewardConfig reward;
};

/// Three checkable rules over a 20-token vocabulary, length 10.
inline ToyEnvironment default_toy_environment() {
  ToyEnvironment env;
  env.rules = {synthetic::contains_token(3), synthetic::distinct_at_least(5),
               synthetic::ends_with(0)};
  return env;
}

struct StepMetrics {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double mean_rule_satisfaction = 0.0;
  std::vector<double> rule_satisfaction;  // per rule
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
};

inline void to_json(json& j, const StepMetrics& m) {
  j = json{{"step", m.step},
           {"mean_reward", m.mean_reward},
           {"mean_rule_satisfaction", m.mean_rule_satisfaction},
           {"rule_satisfaction", m.rule_satisfaction},
           {"mean_kl", m.mean_kl},
           {"clip_fraction", m.clip_fraction}};
}

/// Gradient-ascent update rule for the logits table: plain SGD, or Adam
/// with bias correction.
class LogitOptimizer {
 public:
  LogitOptimizer(const GrpoConfig& config, std::size_t num_params)
      : config_(config), m_(num_params, 0.0), v_(num_params, 0.0) {}

  void ascend(std::span<double> params, std::span<const double> grad) {
    if (params.size() != grad.size() || params.size() != m_.size())
      throw ArgumentError("optimizer parameter size mismatch");
    const double lr = config_.learning_rate;
    if (config_.optimizer == OptimizerKind::kSgd) {
      for (std::size_t j = 0; j < params.size(); ++j) params[j] += lr * grad[j];
      return;
    }
    ++t_;
    const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t j = 0; j < params.size(); ++j) {
      m_[j] = b1 * m_[j] + (1.0 - b1) * grad[j];
      v_[j] = b2 * v_[j] + (1.0 - b2) * grad[j] * grad[j];
      params[j] += lr * (m_[j] / c1) / (std::sqrt(v_[j] / c2) + config_.adam_epsilon);
    }
  }

 private:
  GrpoConfig config_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

/// One rollout-and-update round: prompts_per_step groups of group_size
/// samples are drawn from `policy`, scored by the composite reward (KL
/// measured against `reference`), normalized within each group, and the
/// surrogate is ascended on the logits.
inline StepMetrics grpo_step(ToyPolicy& policy, const ToyPolicy& reference,
                             const ToyEnvironment& env, const GrpoConfig& config,
                             Rng& rng, LogitOptimizer& optimizer,
                             std::size_t step_index = 0) {
  config.validate();
  const std::size_t G = config.group_size;
  const std::size_t total = config.prompts_per_step * G;
  const std::size_t K = env.rules.size();

  std::vector<Sequence> samples;
  std::vector<double> logp_old, advantages;
  samples.reserve(total);
  StepMetrics m;
  m.step = step_index;
  m.rule_satisfaction.assign(K, 0.0);

  for (std::size_t g = 0; g < config.prompts_per_step; ++g) {
    std::vector<double> rewards;
    for (std::size_t i = 0; i < G; ++i) {
      Sequence seq = policy.sample(rng);
      const double lp = policy.log_prob(seq);
      std::vector<int> scores(K);
      for (std::size_t k = 0; k < K; ++k) {
        scores[k] = env.rules[k].check(seq) ? 1 : 0;
        m.rule_satisfaction[k] += scores[k];
      }
      const double r_model = env.model_reward ? env.model_reward(seq) : 0.0;
      const auto b = total_reward(scores, r_model, lp, reference.log_prob(seq),
                                  static_cast<long>(seq.size()), env.reward);
      rewards.push_back(b.total);
      m.mean_reward += b.total;
      m.mean_rule_satisfaction += b.r_rule;
      m.mean_kl += b.kl;
      samples.push_back(std::move(seq));
      logp_old.push_back(lp);
    }
    auto adv = group_advantages(rewards, config.advantage_epsilon, config.std_convention);
    advantages.insert(advantages.end(), adv.begin(), adv.end());
  }

  const std::vector<double> weights(total, 1.0 / static_cast<double>(total));
  std::size_t clipped = 0;
  for (std::size_t epoch = 0; epoch < config.update_epochs; ++epoch) {
    if (epoch + 1 == config.update_epochs) {
      for (std::size_t i = 0; i < total; ++i) {
        const double ratio = std::exp(policy.log_prob(samples[i]) - logp_old[i]);
        clipped += std::abs(ratio - 1.0) > config.clip_epsilon;
      }
    }
    const auto grad = surrogate_gradient(policy, samples, logp_old, advantages,
                                         weights, config.clip_epsilon);
    optimizer.ascend(policy.logits(), grad);
  }

  const double n = static_cast<double>(total);
  m.mean_reward /= n;
  m.mean_rule_satisfaction /= n;
  m.mean_kl /= n;
  for (auto& s : m.rule_satisfaction) s /= n;
  m.clip_fraction = static_cast<double>(clipped) / n;
  return m;
}

struct TrainResult {
  std::vector<StepMetrics> curve;
  ToyPolicy policy;
  ToyPolicy initial;
};

/// Trains a uniform-initialized policy against `env` for config.steps
/// steps. The initial policy doubles as the frozen KL reference. Metrics
/// are appended to `metrics_path` as JSONL when given.
inline TrainResult train_toy(const ToyEnvironment& env, const GrpoConfig& config,
                             const std::optional<std::filesystem::path>& metrics_path = {}) {
  config.validate();
  if (env.rules.empty()) throw ArgumentError("empty rule score vector");
  ToyPolicy reference(env.seq_len, env.vocab_size);
  TrainResult result{{}, reference, reference};
  Rng rng = Rng::substream(config.seed, "grpo.rollouts");
  std::ofstream out;
  if (metrics_path) {
    out.open(*metrics_path, std::ios::binary);
    if (!out) throw DataError("cannot write " + metrics_path->string());
  }
  LogitOptimizer optimizer(config, reference.logits().size());
  for (std::size_t step = 0; step < config.steps; ++step) {
    auto m = grpo_step(result.policy, reference, env, config, rng, optimizer, step);
    if (out) out << json(m).dump() << '\n';
    result.curve.push_back(std::move(m));
  }
  return result;
}

/// Averages of a per-step series over consecutive, non-overlapping windows.
inline std::vector<double> window_averages(std::span<const double> series,
                                           std::size_t window) {
  if (window == 0) throw ArgumentError("window must be >= 1");
  std::vector<double> out;
  for (std::size_t b = 0; b + window <= series.size(); b += window) {
    double s = 0.0;
    for (std::size_t i = b; i < b + window; ++i) s += series[i];
    out.push_back(s / static_cast<double>(window));
  }
  return out;
}

}  // namespace rulekit

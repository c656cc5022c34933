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

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "rulekit/grpo.hpp"
#include "support/temp_dir.hpp"

namespace rulekit {
namespace {

using Big = boost::multiprecision::cpp_bin_float_50;

// Extended-precision reference for (r_i - mean) / (pop_std + eps).
std::vector<double> advantages_oracle(const std::vector<double>& r, double eps) {
  Big mean = 0;
  for (double x : r) mean += Big(x);
  mean /= r.size();
  Big ss = 0;
  for (double x : r) ss += (Big(x) - mean) * (Big(x) - mean);
  const Big sd = boost::multiprecision::sqrt(ss / r.size());
  std::vector<double> out;
  for (double x : r) out.push_back(static_cast<double>((Big(x) - mean) / (sd + Big(eps))));
  return out;
}

TEST(GroupAdvantages, IdenticalRewardsGiveExactZeros) {
  EXPECT_EQ(group_advantages(std::vector<double>{1, 1, 1}), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(group_advantages(std::vector<double>{-7.5, -7.5}), (std::vector<double>{0, 0}));
}

TEST(GroupAdvantages, TwoPointExample) {
  auto a = group_advantages(std::vector<double>{0, 2});
  EXPECT_NEAR(a[0], -1.0, 1e-8);
  EXPECT_NEAR(a[1], 1.0, 1e-8);
}

TEST(GroupAdvantages, FourPointExampleAgainstOracle) {
  const std::vector<double> r{1, 2, 3, 6};
  auto a = group_advantages(r);
  auto o = advantages_oracle(r, 1e-9);
  const double sd = std::sqrt(14.0 / 4.0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_NEAR(a[i], o[i], 1e-12);
    EXPECT_NEAR(a[i], (r[i] - 3.0) / (sd + 1e-9), 1e-12);
  }
}

TEST(GroupAdvantages, SampleConventionFlag) {
  auto a = group_advantages(std::vector<double>{0, 2}, 0.0, StdConvention::kSample);
  EXPECT_NEAR(a[1], 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(GroupAdvantages, TooShortRejected) {
  EXPECT_THROW(group_advantages(std::vector<double>{1.0}), ArgumentError);
  EXPECT_THROW(group_advantages(std::vector<double>{}), ArgumentError);
}

TEST(GroupAdvantages, RandomVectorsMatchOracle) {
  Rng rng(1);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> r(2 + rng.below(15));
    for (auto& x : r) x = (rng.uniform() - 0.5) * 20;
    auto a = group_advantages(r);
    auto o = advantages_oracle(r, 1e-9);
    for (std::size_t j = 0; j < r.size(); ++j) worst = std::max(worst, std::abs(a[j] - o[j]));
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(GroupAdvantagesProperties, MeanZeroShiftAndScaleInvariant) {
  Rng rng(2);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> r(2 + rng.below(15));
    for (auto& x : r) x = (rng.uniform() - 0.5) * 10;
    auto a = group_advantages(r);
    EXPECT_LE(std::abs(std::accumulate(a.begin(), a.end(), 0.0) / a.size()), 1e-6);

    const double shift = (rng.uniform() - 0.5) * 100;
    const double scale = 0.01 + rng.uniform() * 50;
    std::vector<double> shifted = r, scaled = r;
    for (auto& x : shifted) x += shift;
    for (auto& x : scaled) x *= scale;
    auto as = group_advantages(shifted);
    auto ac = group_advantages(scaled);
    for (std::size_t j = 0; j < r.size(); ++j) {
      EXPECT_NEAR(as[j], a[j], 1e-6);
      EXPECT_NEAR(ac[j], a[j], 1e-6);
    }
  }
}

TEST(ClippedSurrogate, Examples) {
  for (double adv : {-3.0, 0.0, 0.7, 5.0}) EXPECT_DOUBLE_EQ(clipped_surrogate(1.0, adv, 0.2), adv);
  EXPECT_DOUBLE_EQ(clipped_surrogate(1.5, 2.0, 0.2), 2.4);
  EXPECT_DOUBLE_EQ(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
  EXPECT_THROW(clipped_surrogate(0.0, 1.0, 0.2), ArgumentError);
  EXPECT_THROW(clipped_surrogate(-1.0, 1.0, 0.2), ArgumentError);
}

TEST(ClippedSurrogate, PessimismProperty) {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double ratio = std::exp((rng.uniform() - 0.5) * 4);
    const double adv = (rng.uniform() - 0.5) * 10;
    const double eps = 0.01 + rng.uniform() * 0.99;
    EXPECT_LE(clipped_surrogate(ratio, adv, eps), ratio * adv);
  }
}

TEST(GrpoConfig, Validation) {
  GrpoConfig c;
  EXPECT_NO_THROW(c.validate());
  c.clip_epsilon = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = {};
  c.clip_epsilon = 1.5;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = {};
  c.group_size = 1;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = {};
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(ToyPolicy, ProbabilitiesNormalized) {
  ToyPolicy p(3, 7);
  Rng rng(4);
  for (auto& l : p.logits()) l = (rng.uniform() - 0.5) * 30;
  for (std::size_t pos = 0; pos < 3; ++pos) {
    auto pr = p.probabilities(pos);
    EXPECT_NEAR(std::accumulate(pr.begin(), pr.end(), 0.0), 1.0, 1e-12);
  }
  const Sequence seq{1, 4, 6};
  double lp = 0;
  for (std::size_t pos = 0; pos < 3; ++pos) lp += std::log(p.probabilities(pos)[seq[pos]]);
  EXPECT_NEAR(p.log_prob(seq), lp, 1e-12);
  EXPECT_THROW(p.log_prob(Sequence{1}), ArgumentError);
  EXPECT_THROW(ToyPolicy(0, 3), ArgumentError);
}

// ---------------------------------------------------------------------------
// Gradient check on a 2-token, length-1 policy. The expected surrogate under
// the behaviour policy is enumerable:
//   J(theta) = sum_y pi_old(y) * clipped_surrogate(pi(y) / pi_old(y), A_y, eps)

double expected_surrogate(const ToyPolicy& p, const ToyPolicy& old, const std::vector<double>& adv, double eps) {
  double j = 0;
  for (int y = 0; y < 2; ++y) {
    const Sequence s{y};
    const double ratio = std::exp(p.log_prob(s) - old.log_prob(s));
    j += std::exp(old.log_prob(s)) * clipped_surrogate(ratio, adv[y], eps);
  }
  return j;
}

std::vector<double> analytic_gradient(const ToyPolicy& p, const ToyPolicy& old, const std::vector<double>& adv,
                                      double eps) {
  const std::vector<Sequence> samples{{0}, {1}};
  const std::vector<double> logp_old{old.log_prob(samples[0]), old.log_prob(samples[1])};
  const std::vector<double> weights{std::exp(logp_old[0]), std::exp(logp_old[1])};
  return surrogate_gradient(p, samples, logp_old, adv, weights, eps);
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1e-12, std::max(std::abs(a[i]), std::abs(b[i]))));
  return worst;
}

std::vector<double> finite_difference(ToyPolicy p, const ToyPolicy& old, const std::vector<double>& adv,
                                      double eps) {
  std::vector<double> g(2);
  const double h = 1e-6;
  for (std::size_t v = 0; v < 2; ++v) {
    const double saved = p.logit(0, v);
    p.logit(0, v) = saved + h;
    const double up = expected_surrogate(p, old, adv, eps);
    p.logit(0, v) = saved - h;
    const double down = expected_surrogate(p, old, adv, eps);
    p.logit(0, v) = saved;
    g[v] = (up - down) / (2 * h);
  }
  return g;
}

TEST(SurrogateGradient, MatchesFiniteDifferencesInsideTrustRegion) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    ToyPolicy old(1, 2);
    old.logit(0, 0) = (rng.uniform() - 0.5) * 4;
    old.logit(0, 1) = (rng.uniform() - 0.5) * 4;
    ToyPolicy p = old;
    p.logit(0, 0) += (rng.uniform() - 0.5) * 0.1;
    const std::vector<double> adv{(rng.uniform() - 0.5) * 4, (rng.uniform() - 0.5) * 4};
    const double eps = 0.3;
    auto g = analytic_gradient(p, old, adv, eps);
    auto fd = finite_difference(p, old, adv, eps);
    if (std::abs(fd[0]) < 1e-6) continue;
    EXPECT_LE(max_relative_error(g, fd), 1e-4) << trial;
  }
}

TEST(SurrogateGradient, ClippedRegionHasZeroGradient) {
  ToyPolicy old(1, 2);
  ToyPolicy p = old;
  p.logit(0, 0) = 2.0;  // pi(0) ~ 0.88 vs 0.5: ratio far above 1 + eps
  const std::vector<double> adv{1.0, 0.0};
  auto g = analytic_gradient(p, old, adv, 0.2);
  auto fd = finite_difference(p, old, adv, 0.2);
  EXPECT_NEAR(g[0], 0.0, 1e-12);
  EXPECT_NEAR(fd[0], 0.0, 1e-9);
}

TEST(SurrogateGradient, OnPolicyGradientIsPolicyGradient) {
  // At theta = theta_old the surrogate gradient equals grad E_{y~pi}[A(y)].
  ToyPolicy p(1, 2);
  p.logit(0, 0) = 0.4;
  const std::vector<double> adv{1.5, -0.5};
  auto g = analytic_gradient(p, p, adv, 0.2);
  const double p0 = p.probabilities(0)[0];
  const double dj = (adv[0] - adv[1]) * p0 * (1 - p0);
  EXPECT_NEAR(g[0], dj, 1e-12);
  EXPECT_NEAR(g[1], -dj, 1e-12);
}

TEST(SurrogateGradient, MismatchedLengthsRejected) {
  ToyPolicy p(1, 2);
  const std::vector<Sequence> s{{0}};
  EXPECT_THROW(surrogate_gradient(p, s, std::vector<double>{}, std::vector<double>{1}, std::vector<double>{1}, 0.2),
               ArgumentError);
}

// ---------------------------------------------------------------------------
// Trainer

TEST(SyntheticRules, Checks) {
  const Sequence s{3, 1, 1, 2, 0};
  EXPECT_TRUE(synthetic::contains_token(3).check(s));
  EXPECT_FALSE(synthetic::contains_token(9).check(s));
  EXPECT_TRUE(synthetic::distinct_at_least(4).check(s));
  EXPECT_FALSE(synthetic::distinct_at_least(5).check(s));
  EXPECT_TRUE(synthetic::ends_with(0).check(s));
  EXPECT_TRUE(synthetic::starts_with(3).check(s));
  EXPECT_FALSE(synthetic::starts_with(0).check(s));
}

// Depth-first search over token sequences for one that satisfies every rule.
bool satisfiable(const ToyEnvironment& env, Sequence& prefix) {
  if (prefix.size() == env.seq_len) {
    for (const auto& r : env.rules)
      if (!r.check(prefix)) return false;
    return true;
  }
  for (std::size_t v = 0; v < env.vocab_size; ++v) {
    prefix.push_back(static_cast<int>(v));
    if (satisfiable(env, prefix)) return true;
    prefix.pop_back();
  }
  return false;
}

TEST(ToyEnvironment, DefaultRulesAreJointlySatisfiable) {
  auto env = default_toy_environment();
  Sequence seq;
  ASSERT_TRUE(satisfiable(env, seq));
  EXPECT_EQ(seq.size(), 10u);
}

TEST(ToyEnvironment, UnsatisfiableRulesAreDetected) {
  ToyEnvironment env;
  env.vocab_size = 3;
  env.seq_len = 3;
  env.rules = {synthetic::distinct_at_least(4)};
  Sequence seq;
  EXPECT_FALSE(satisfiable(env, seq));
}

TEST(GrpoStep, OnlySampledTokensMove) {
  auto env = default_toy_environment();
  env.reward.beta_kl = 0;
  GrpoConfig cfg;
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.prompts_per_step = 1;
  ToyPolicy policy(env.seq_len, env.vocab_size);
  const ToyPolicy reference = policy;
  Rng rng(6);
  LogitOptimizer opt(cfg, policy.logits().size());
  // Replay the draws to learn which tokens were sampled.
  Rng replay = rng;
  std::vector<Sequence> drawn;
  for (std::size_t i = 0; i < cfg.group_size; ++i) drawn.push_back(reference.sample(replay));
  grpo_step(policy, reference, env, cfg, rng, opt);
  for (std::size_t pos = 0; pos < env.seq_len; ++pos) {
    for (std::size_t v = 0; v < env.vocab_size; ++v) {
      bool sampled = false;
      for (const auto& s : drawn) sampled |= s[pos] == static_cast<int>(v);
      if (!sampled) {
        EXPECT_NEAR(policy.logit(pos, v), 0.0, 1e-12) << pos << "," << v;
      }
    }
  }
}

TEST(GrpoStep, EqualRewardsLeaveLogitsUnchanged) {
  ToyEnvironment env;
  env.rules = {synthetic::distinct_at_least(1)};
  env.reward.beta_kl = 0;
  GrpoConfig cfg;
  ToyPolicy policy(env.seq_len, env.vocab_size);
  const ToyPolicy reference = policy;
  Rng rng(7);
  LogitOptimizer opt(cfg, policy.logits().size());
  for (int step = 0; step < 5; ++step) grpo_step(policy, reference, env, cfg, rng, opt, step);
  for (double l : policy.logits()) EXPECT_EQ(l, 0.0);
}

TEST(GrpoStep, MultipleEpochsEngageClip) {
  auto env = default_toy_environment();
  env.reward.beta_kl = 0;
  GrpoConfig cfg;
  cfg.update_epochs = 4;
  cfg.learning_rate = 0.5;
  ToyPolicy policy(env.seq_len, env.vocab_size);
  const ToyPolicy reference = policy;
  Rng rng(8);
  LogitOptimizer opt(cfg, policy.logits().size());
  auto m = grpo_step(policy, reference, env, cfg, rng, opt);
  EXPECT_GT(m.clip_fraction, 0.0);
}

GrpoConfig short_config(std::size_t steps) {
  GrpoConfig cfg;
  cfg.steps = steps;
  return cfg;
}

TEST(TrainToy, SeededRunsAreIdentical) {
  auto env = default_toy_environment();
  auto a = train_toy(env, short_config(20));
  auto b = train_toy(env, short_config(20));
  ASSERT_EQ(a.curve.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(json(a.curve[i]), json(b.curve[i]));
  EXPECT_EQ(a.policy.to_json(), b.policy.to_json());
}

TEST(TrainToy, WritesMetricsJsonl) {
  testing::TempDir dir;
  auto env = default_toy_environment();
  train_toy(env, short_config(5), dir / "metrics.jsonl");
  const auto text = testing::read_file(dir / "metrics.jsonl");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  auto first = json::parse(text.substr(0, text.find('\n')));
  for (const char* k : {"step", "mean_reward", "mean_rule_satisfaction", "rule_satisfaction", "mean_kl"})
    EXPECT_TRUE(first.contains(k)) << k;
}

TEST(TrainToy, ZeroRulesRejected) {
  ToyEnvironment env;
  EXPECT_THROW(train_toy(env, short_config(1)), ArgumentError);
}

TEST(TrainToy, RuleRewardRaisesSatisfaction) {
  auto env = default_toy_environment();
  env.reward.beta_kl = 0;
  auto r = train_toy(env, short_config(150));
  const double start = r.curve.front().mean_rule_satisfaction;
  const double end = r.curve.back().mean_rule_satisfaction;
  EXPECT_GT(end, start + 0.3);
}

TEST(TrainToy, KlPenaltyHoldsPolicyCloserToReference) {
  auto env = default_toy_environment();
  env.reward.beta_kl = 0;
  auto free_run = train_toy(env, short_config(200));
  env.reward.beta_kl = 10;
  auto tied_run = train_toy(env, short_config(200));
  EXPECT_LT(tied_run.curve.back().mean_kl, free_run.curve.back().mean_kl);
  EXPECT_LT(tied_run.curve.back().mean_rule_satisfaction, free_run.curve.back().mean_rule_satisfaction);
}

TEST(WindowAverages, NonOverlappingWindows) {
  const std::vector<double> s{1, 2, 3, 4, 5, 6, 7};
  EXPECT_EQ(window_averages(s, 2), (std::vector<double>{1.5, 3.5, 5.5}));
  EXPECT_THROW(window_averages(s, 0), ArgumentError);
}

}  // namespace
}  // namespace rulekit

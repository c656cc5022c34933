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

// Composite training reward: rule satisfaction, affine scaling, learned
// reward, KL penalty and optional length penalty.

#pragma once

#include <cmath>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "rulekit/error.hpp"

namespace rulekit {

using json = nlohmann::json;

enum class KlEstimator : int { kLogRatio = 1, kNonNegative = 2 };

struct RewardConfig {
  double alpha = 10.0;
  double beta = -7.5;
  double beta_kl = 0.001;
  KlEstimator kl_version = KlEstimator::kNonNegative;
  bool length_penalty_enabled = false;
  int target_length = 300;
  bool use_scaled_rule_reward = true;

  void validate() const {
    if (!(beta_kl >= 0.0)) throw ArgumentError("beta_kl must be >= 0");
    if (target_length <= 0) throw ArgumentError("target_length must be > 0");
  }
};

struct RewardBreakdown {
  double r_rule = 0.0;
  double r_rule_scaled = 0.0;
  double r_model = 0.0;
  double kl = 0.0;
  int kl_version = 2;
  double length_penalty = 0.0;
  double total = 0.0;
};

inline void to_json(json& j, const RewardBreakdown& b) {
  j = json{{"r_rule", b.r_rule},           {"r_rule_scaled", b.r_rule_scaled},
           {"r_model", b.r_model},         {"kl", b.kl},
           {"kl_version", b.kl_version},   {"length_penalty", b.length_penalty},
           {"total", b.total}};
}

/// Mean of binary rule scores.
inline double rule_reward(std::span<const int> scores) {
  if (scores.empty()) throw ArgumentError("empty rule score vector");
  long satisfied = 0;
  for (int s : scores) {
    if (s != 0 && s != 1) throw ArgumentError("rule scores must be 0 or 1");
    satisfied += s;
  }
  return static_cast<double>(satisfied) / static_cast<double>(scores.size());
}

inline double scale_rule_reward(double r, double alpha, double beta) {
  return alpha * r + beta;
}

/// Sequence-level KL estimate from log-probabilities under the policy and
/// the reference. With t = logp_policy - logp_ref, version 1 is t and
/// version 2 is exp(-t) - 1 + t.
inline double kl_estimate(double logp_policy, double logp_ref,
                          KlEstimator version) {
  if (!std::isfinite(logp_policy) || !std::isfinite(logp_ref))
    throw ArgumentError("kl_estimate requires finite log-probabilities");
  const double t = logp_policy - logp_ref;
  if (version == KlEstimator::kLogRatio) return t;
  // Near zero both expm1(-t) and t are ~t and cancel, so sum the series
  // t^2/2 - t^3/6 + ... directly instead.
  if (std::abs(t) < 0.5) {
    double term = t * t / 2.0;
    double sum = term;
    for (int k = 3; k < 30 && term != 0.0; ++k) {
      term *= -t / k;
      sum += term;
    }
    return sum;
  }
  return std::expm1(-t) + t;
}

/// Amount subtracted from the reward: (length / L) / 2 - 1/2. Not clamped,
/// so lengths below L yield a negative penalty.
inline double length_penalty(long response_length, int target_length) {
  if (response_length < 0) throw ArgumentError("response_length must be >= 0");
  if (target_length <= 0) throw ArgumentError("target_length must be > 0");
  return 0.5 * (static_cast<double>(response_length) /
                static_cast<double>(target_length)) -
         0.5;
}

inline RewardBreakdown total_reward(std::span<const int> scores, double r_model,
                                    double logp_policy, double logp_ref,
                                    long response_length,
                                    const RewardConfig& config) {
  config.validate();
  RewardBreakdown b;
  b.r_rule = rule_reward(scores);
  b.r_rule_scaled = scale_rule_reward(b.r_rule, config.alpha, config.beta);
  b.r_model = r_model;
  b.kl = kl_estimate(logp_policy, logp_ref, config.kl_version);
  b.kl_version = static_cast<int>(config.kl_version);
  b.length_penalty = config.length_penalty_enabled
                         ? length_penalty(response_length, config.target_length)
                         : 0.0;
  b.total = (config.use_scaled_rule_reward ? b.r_rule_scaled : b.r_rule) +
            b.r_model - config.beta_kl * b.kl - b.length_penalty;
  return b;
}

}  // namespace rulekit

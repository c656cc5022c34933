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

// Binary rule verification with an LLM judge.

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rulekit/data_model.hpp"
#include "rulekit/error.hpp"
#include "rulekit/prompts.hpp"
#include "rulekit/provider.hpp"
#include "rulekit/rule_extraction.hpp"

namespace rulekit {

inline constexpr std::string_view kYesMarker = "[[Yes]]";
inline constexpr std::string_view kNoMarker = "[[No]]";

struct RuleJudgment {
  std::size_t rule_index = 0;
  std::string conversation_ref;
  int verdict = 0;  // 1 satisfied, 0 unsatisfied
  std::string raw_response;
  int attempts = 1;
  bool parse_failed = false;  // implies verdict == 0
};

inline void to_json(json& j, const RuleJudgment& r) {
  j = json{{"rule_index", r.rule_index},
           {"conversation_ref", r.conversation_ref},
           {"verdict", r.verdict},
           {"attempts", r.attempts},
           {"parse_failed", r.parse_failed},
           {"raw_response", r.raw_response}};
}

inline RuleJudgment rule_judgment_from_json(const json& j) {
  RuleJudgment r;
  r.rule_index = j.at("rule_index").get<std::size_t>();
  r.conversation_ref = j.at("conversation_ref").get<std::string>();
  r.verdict = j.at("verdict").get<int>();
  r.attempts = j.value("attempts", 1);
  r.parse_failed = j.value("parse_failed", false);
  r.raw_response = j.value("raw_response", std::string());
  if (r.verdict != 0 && r.verdict != 1) throw DataError("verdict must be 0 or 1");
  return r;
}

struct VerifierConfig {
  bool concise_mode = true;
  SamplingParams sampling = defaults::kVerifier;
  int max_retries = 2;
  std::string model_id;
  std::size_t concurrency = 4;

  void validate() const {
    if (max_retries < 0) throw ArgumentError("max_retries must be >= 0");
    if (sampling.temperature < 0) throw ArgumentError("temperature must be >= 0");
  }
};

/// A judgment could not be obtained because the provider failed.
class JudgmentError : public Error {
 public:
  JudgmentError(std::size_t rule_index, const std::string& message)
      : Error("rule " + std::to_string(rule_index) + ": " + message),
        rule_index_(rule_index) {}
  std::size_t rule_index() const noexcept { return rule_index_; }

 private:
  std::size_t rule_index_;
};

inline std::string build_verifier_prompt(std::string_view rule,
                                         const Conversation& conversation,
                                         bool concise_mode) {
  if (rule.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw ArgumentError("rule text is empty");
  return prompts::fill_template(
      concise_mode ? prompts::kVerifierConcise : prompts::kVerifier,
      {{"rule", std::string(rule)}, {"conversation", conversation.serialize()}});
}

/// 1 for "[[Yes]]", 0 for "[[No]]", whichever occurs first; nullopt if
/// neither marker is present. Markers are case-sensitive.
inline std::optional<int> parse_verdict(std::string_view text) {
  const auto yes = text.find(kYesMarker);
  const auto no = text.find(kNoMarker);
  if (yes == std::string_view::npos && no == std::string_view::npos)
    return std::nullopt;
  return yes < no ? 1 : 0;
}

/// Asks the verifier whether `conversation` satisfies `rule`. Unparseable
/// replies are retried up to config.max_retries times and then recorded as
/// unsatisfied with parse_failed set.
inline RuleJudgment judge(const Rule& rule, const Conversation& conversation,
                          std::string conversation_ref, Provider& provider,
                          const VerifierConfig& config = {}) {
  config.validate();
  const std::string prompt =
      build_verifier_prompt(rule.text, conversation, config.concise_mode);
  RuleJudgment out;
  out.rule_index = rule.index;
  out.conversation_ref = std::move(conversation_ref);
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    out.attempts = attempt + 1;
    try {
      out.raw_response =
          provider.complete(config.sampling.request(prompt, config.model_id, attempt))
              .output;
    } catch (const std::exception& e) {
      throw JudgmentError(rule.index, e.what());
    }
    if (auto v = parse_verdict(out.raw_response)) {
      out.verdict = *v;
      out.parse_failed = false;
      return out;
    }
  }
  out.verdict = 0;
  out.parse_failed = true;
  return out;
}

struct RuleScores {
  std::vector<RuleJudgment> judgments;  // ordered by rule index
  std::vector<int> scores;              // s_i per rule
};

/// Judges every rule of the set against one conversation.
inline RuleScores judge_all(const RuleSet& rules, const Conversation& conversation,
                            const std::string& conversation_ref, Provider& provider,
                            const VerifierConfig& config = {}) {
  if (rules.empty()) throw ArgumentError("empty rule set");
  config.validate();
  std::vector<std::optional<RuleJudgment>> slots(rules.size());
  std::vector<std::string> errors(rules.size());
  parallel_for(rules.size(), config.concurrency, [&](std::size_t i) {
    try {
      slots[i] = judge(rules.rules[i], conversation, conversation_ref, provider,
                       config);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  RuleScores out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) throw JudgmentError(rules.rules[i].index, errors[i]);
    out.scores.push_back(slots[i]->verdict);
    out.judgments.push_back(std::move(*slots[i]));
  }
  return out;
}

struct DeterminismResult {
  double score = 0.0;
  std::size_t yes = 0;
  std::size_t no = 0;
  std::size_t unparseable = 0;
};

/// max(#Yes, #No) / (#Yes + #No) over repeated sampled judgments. Trial t
/// is requested with seed t. Unparseable trials are excluded and counted.
inline DeterminismResult determinism_score(const Rule& rule,
                                           const Conversation& conversation,
                                           Provider& provider,
                                           std::size_t trials = 100,
                                           double temperature = 1.0,
                                           const VerifierConfig& config = {}) {
  if (trials == 0) throw ArgumentError("trials must be >= 1");
  SamplingParams sampling = defaults::kDeterminism;
  sampling.temperature = temperature;
  const std::string prompt =
      build_verifier_prompt(rule.text, conversation, config.concise_mode);
  std::vector<CompletionRequest> requests;
  for (std::size_t t = 0; t < trials; ++t)
    requests.push_back(sampling.request(prompt, config.model_id,
                                        static_cast<std::int64_t>(t)));
  DeterminismResult out;
  for (const auto& r : complete_batch(provider, requests, config.concurrency)) {
    const auto v = r ? parse_verdict(r.value().output) : std::nullopt;
    if (!v) {
      ++out.unparseable;
    } else if (*v == 1) {
      ++out.yes;
    } else {
      ++out.no;
    }
  }
  if (out.yes + out.no == 0) throw ParseError("all determinism trials unparseable");
  out.score = static_cast<double>(std::max(out.yes, out.no)) /
              static_cast<double>(out.yes + out.no);
  return out;
}

}  // namespace rulekit

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

// An offline stand-in for every model role. It recognizes which prompt
// template it was given and answers in the expected format, deriving all
// choices from a hash of the prompt (and of the request seed when sampling
// at nonzero temperature). Used for dry runs of the CLI and in tests.

#pragma once

#include <array>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rulekit/provider.hpp"
#include "rulekit/rng.hpp"

namespace rulekit {

namespace synthetic_detail {

struct Theme {
  std::string_view keyword;
  std::array<std::string_view, 3> phrasings;
};

inline constexpr std::array<Theme, 8> kThemes{{
    {"structure",
     {"The assistant's responses should present explanations in a clear step-by-step structure.",
      "Responses should organize information into logical sections.",
      "The assistant should structure answers with numbered points when listing steps."}},
    {"accuracy",
     {"The assistant's responses must be factually accurate and free of errors.",
      "Responses should avoid stating unsupported claims as facts.",
      "The assistant should verify calculations before presenting results."}},
    {"conciseness",
     {"The assistant's responses should be concise and avoid redundancy.",
      "Responses should focus on the core of the user's query without filler.",
      "The assistant should not repeat information already provided."}},
    {"tone",
     {"The assistant should maintain a professional and empathetic tone.",
      "Responses should avoid dismissive or condescending language.",
      "The assistant's tone should match the nature of the user's request."}},
    {"completeness",
     {"The assistant's responses should address every part of the user's question.",
      "Responses should not omit components the user explicitly asked for.",
      "The assistant should answer all sub-questions in a multi-part request."}},
    {"examples",
     {"The assistant should include concrete examples to illustrate concepts.",
      "Responses should use illustrative examples when explaining abstract ideas.",
      "The assistant's explanations should be supported by relevant examples."}},
    {"context",
     {"The assistant should ground answers in the context the user provided.",
      "Responses should ask for clarification when the request is ambiguous.",
      "The assistant should not introduce assumptions beyond the given context."}},
    {"safety",
     {"The assistant should note safety or ethical considerations when relevant.",
      "Responses should recommend professional consultation for high-stakes advice.",
      "The assistant should decline to provide harmful instructions."}},
}};

inline std::uint64_t hash_request(const CompletionRequest& r, std::uint64_t seed) {
  std::uint64_t h = fnv1a64(r.prompt) ^ mix64(seed);
  if (r.temperature > 0.0 && r.seed) h ^= mix64(static_cast<std::uint64_t>(*r.seed) + 1);
  return mix64(h);
}

inline std::string section_after(std::string_view prompt, std::string_view header) {
  const auto pos = prompt.find(header);
  if (pos == std::string_view::npos) return {};
  return std::string(prompt.substr(pos + header.size()));
}

inline std::string json_array(const std::vector<std::string>& items) {
  return nlohmann::json(items).dump();
}

}  // namespace synthetic_detail

class SyntheticProvider : public Provider {
 public:
  explicit SyntheticProvider(std::uint64_t seed = 0) : seed_(seed) {}

  ReasoningCompletion complete(const CompletionRequest& request) override {
    using namespace synthetic_detail;
    request.validate();
    const std::string_view p = request.prompt;
    Rng rng(hash_request(request, seed_));

    if (p.find("explanation of why the user might have preferred") != p.npos) {
      // Stage 1: mention three themes in the reasoning chain.
      const auto winner = section_after(p, "[Winning Conversation]: ").substr(0, 1);
      std::ostringstream chain;
      chain << "Let me compare the two conversations. Assistant " << winner
            << " was preferred.";
      for (auto idx : rng.sample_without_replacement(kThemes.size(), 3))
        chain << " Its answer shows better " << kThemes[idx].keyword << ".";
      return {"Assistant " + winner + " is better overall.", chain.str()};
    }
    if (p.find("extract any rule-like statements") != p.npos) {
      const auto chain = section_after(p, "[Reasoning]\n");
      std::vector<std::string> rules;
      for (const auto& theme : kThemes)
        if (chain.find(theme.keyword) != std::string::npos)
          rules.emplace_back(theme.phrasings[rng.below(theme.phrasings.size())]);
      auto text = json_array(rules);
      // Some replies ignore the format instruction.
      if (rng.bernoulli(0.25)) text = "```json\n" + text + "\n```";
      return {text, "Identified rule-like statements."};
    }
    if (p.find("Please merge them") != p.npos) {
      const auto listing = section_after(p, "[Rules]\n");
      std::vector<bool> present(kThemes.size(), false);
      std::vector<std::string> merged;
      std::istringstream lines(listing);
      for (std::string line; std::getline(lines, line);) {
        for (std::size_t t = 0; t < kThemes.size(); ++t) {
          if (present[t]) continue;
          for (auto phrase : kThemes[t].phrasings) {
            if (line.find(phrase) != std::string::npos ||
                line.find(kThemes[t].phrasings[0]) != std::string::npos) {
              present[t] = true;
              merged.emplace_back(kThemes[t].phrasings[0]);
              break;
            }
          }
        }
      }
      return {json_array(merged), "Merged duplicates by theme."};
    }
    if (p.find("[Start of Conversation]") != p.npos) {
      return {rng.bernoulli(0.6) ? "[[Yes]]" : "[[No]]", ""};
    }
    if (p.find("create a leaderboard") != p.npos) {
      const bool first = rng.bernoulli(0.5);
      return {std::string("[{'model': 'model_1', 'rank': ") + (first ? "1" : "2") +
                  "}, {'model': 'model_2', 'rank': " + (first ? "2" : "1") + "}]",
              ""};
    }
    return MockProvider::hashed_reply(p, seed_);
  }

 private:
  std::uint64_t seed_;
};

}  // namespace rulekit

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

// Pairwise preference records, conversations, and dataset filtering.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "rulekit/error.hpp"

namespace rulekit {

using json = nlohmann::json;

/// One pairwise preference record: a prompt with a chosen and a rejected
/// response.
struct PreferenceExample {
  std::string id;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  std::optional<double> chosen_score;
  std::optional<double> rejected_score;
  std::map<std::string, std::string> meta;
};

inline void to_json(json& j, const PreferenceExample& e) {
  j = json{{"id", e.id},
           {"prompt", e.prompt},
           {"chosen", e.chosen},
           {"rejected", e.rejected}};
  if (e.chosen_score) j["chosen_score"] = *e.chosen_score;
  if (e.rejected_score) j["rejected_score"] = *e.rejected_score;
  if (!e.meta.empty()) j["meta"] = e.meta;
}

/// Throws DataError when a required key is missing or mistyped.
inline PreferenceExample preference_example_from_json(const json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  auto text = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string())
      throw DataError(std::string("missing or non-string key '") + key + "'");
    return it->get<std::string>();
  };
  auto score = [&](const char* key) -> std::optional<double> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number())
      throw DataError(std::string("non-numeric key '") + key + "'");
    return it->get<double>();
  };
  PreferenceExample e;
  e.id = text("id");
  if (e.id.empty()) throw DataError("empty id");
  e.prompt = text("prompt");
  e.chosen = text("chosen");
  e.rejected = text("rejected");
  e.chosen_score = score("chosen_score");
  e.rejected_score = score("rejected_score");
  if (auto it = j.find("meta"); it != j.end() && it->is_object()) {
    for (const auto& [k, v] : it->items())
      e.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return e;
}

enum class Role { kUser, kAssistant };

inline std::string_view role_name(Role role) {
  return role == Role::kUser ? "user" : "assistant";
}

inline Role parse_role(std::string_view name) {
  if (name == "user") return Role::kUser;
  if (name == "assistant") return Role::kAssistant;
  throw DataError("unknown conversation role '" + std::string(name) + "'");
}

struct Turn {
  Role role;
  std::string content;
};

/// Ordered list of role-tagged turns. Must contain at least one user turn.
class Conversation {
 public:
  explicit Conversation(std::vector<Turn> turns) : turns_(std::move(turns)) {
    const bool has_user =
        std::any_of(turns_.begin(), turns_.end(),
                    [](const Turn& t) { return t.role == Role::kUser; });
    if (!has_user) throw ArgumentError("conversation has no user turn");
  }

  /// Single exchange: the user prompt followed by one assistant response.
  static Conversation exchange(std::string prompt, std::string response) {
    return Conversation({{Role::kUser, std::move(prompt)},
                         {Role::kAssistant, std::move(response)}});
  }

  const std::vector<Turn>& turns() const noexcept { return turns_; }

  /// "User: ..." / "Assistant: ..." lines, one turn per line group.
  std::string serialize() const {
    std::string out;
    for (std::size_t i = 0; i < turns_.size(); ++i) {
      if (i) out += '\n';
      out += turns_[i].role == Role::kUser ? "User: " : "Assistant: ";
      out += turns_[i].content;
    }
    return out;
  }

 private:
  std::vector<Turn> turns_;
};

inline Conversation chosen_conversation(const PreferenceExample& e) {
  return Conversation::exchange(e.prompt, e.chosen);
}
inline Conversation rejected_conversation(const PreferenceExample& e) {
  return Conversation::exchange(e.prompt, e.rejected);
}

// ---------------------------------------------------------------------------
// Token counting

using TokenCounter = std::function<std::size_t(std::string_view)>;

/// Whitespace-separated words, with every ASCII punctuation glyph counted as
/// its own token. Bytes >= 0x80 are treated as word characters.
inline std::size_t heuristic_token_count(std::string_view text) {
  std::size_t count = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    if (c < 0x80 && std::isspace(c)) {
      in_word = false;
    } else if (c < 0x80 && std::ispunct(c)) {
      ++count;
      in_word = false;
    } else {
      if (!in_word) ++count;
      in_word = true;
    }
  }
  return count;
}

inline std::size_t count_tokens(std::string_view text,
                                const TokenCounter& counter = {}) {
  return counter ? counter(text) : heuristic_token_count(text);
}

// ---------------------------------------------------------------------------
// Loading

struct LoadReport {
  std::vector<PreferenceExample> examples;
  std::size_t skipped = 0;
  /// 1-based line numbers and reasons for every skipped line.
  std::vector<std::pair<std::size_t, std::string>> skip_reasons;
};

/// Reads a JSONL preference file. Malformed lines and duplicate ids are
/// skipped and reported; blank lines are ignored.
inline LoadReport load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read dataset file " + path.string());
  LoadReport report;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      auto example = preference_example_from_json(json::parse(line));
      if (!seen.insert(example.id).second)
        throw DataError("duplicate id '" + example.id + "'");
      report.examples.push_back(std::move(example));
    } catch (const std::exception& ex) {
      ++report.skipped;
      report.skip_reasons.emplace_back(line_no, ex.what());
    }
  }
  if (report.examples.empty())
    throw DataError("zero valid records in " + path.string());
  return report;
}

inline void write_dataset(const std::filesystem::path& path,
                          const std::vector<PreferenceExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& e : examples) out << json(e).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Filtering

struct FilterConfig {
  std::size_t max_tokens = 512;
  bool require_score_gap = true;
  std::string banned_substring = "confidence";
  TokenCounter counter;  // empty selects heuristic_token_count

  void validate() const {
    if (max_tokens == 0) throw ArgumentError("max_tokens must be > 0");
  }
};

inline bool contains_case_insensitive(std::string_view haystack,
                                      std::string_view needle) {
  if (needle.empty()) return true;
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(),
                        needle.end(), [](unsigned char a, unsigned char b) {
                          return std::tolower(a) == std::tolower(b);
                        });
  return it != haystack.end();
}

inline bool passes_filter(const PreferenceExample& e,
                          const FilterConfig& config) {
  if (count_tokens(e.chosen, config.counter) >= config.max_tokens) return false;
  if (count_tokens(e.rejected, config.counter) >= config.max_tokens)
    return false;
  if (config.require_score_gap && e.chosen_score && e.rejected_score &&
      !(*e.chosen_score > *e.rejected_score))
    return false;
  if (!config.banned_substring.empty() &&
      (contains_case_insensitive(e.chosen, config.banned_substring) ||
       contains_case_insensitive(e.rejected, config.banned_substring)))
    return false;
  return true;
}

/// Keeps the examples that pass every predicate, in input order.
inline std::vector<PreferenceExample> filter_examples(
    const std::vector<PreferenceExample>& examples,
    const FilterConfig& config) {
  config.validate();
  std::vector<PreferenceExample> kept;
  for (const auto& e : examples)
    if (passes_filter(e, config)) kept.push_back(e);
  return kept;
}

enum class ExampleFlag { kMissingScores, kIdenticalResponses };

/// Conditions that do not drop an example but should be surfaced.
inline std::vector<ExampleFlag> example_flags(const PreferenceExample& e,
                                              const FilterConfig& config) {
  std::vector<ExampleFlag> flags;
  if (config.require_score_gap && (!e.chosen_score || !e.rejected_score))
    flags.push_back(ExampleFlag::kMissingScores);
  if (e.chosen == e.rejected) flags.push_back(ExampleFlag::kIdenticalResponses);
  return flags;
}

}  // namespace rulekit

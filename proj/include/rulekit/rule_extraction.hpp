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

// Three-stage rule extraction: a reasoning model justifies each preference,
// rules are pulled out of every reasoning chain, and the union is merged
// into a compact rule set.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "rulekit/data_model.hpp"
#include "rulekit/error.hpp"
#include "rulekit/prompts.hpp"
#include "rulekit/provider.hpp"
#include "rulekit/rng.hpp"

namespace rulekit {

enum class RuleStage { kRaw, kMerged };

inline std::string_view stage_name(RuleStage s) {
  return s == RuleStage::kRaw ? "raw" : "merged";
}

inline RuleStage parse_stage(std::string_view s) {
  if (s == "raw") return RuleStage::kRaw;
  if (s == "merged") return RuleStage::kMerged;
  throw DataError("unknown rule stage '" + std::string(s) + "'");
}

struct Rule {
  std::size_t index = 0;
  std::string text;
  std::vector<std::string> source_example_ids;
  RuleStage stage = RuleStage::kRaw;
};

inline void to_json(json& j, const Rule& r) {
  j = json{{"index", r.index},
           {"text", r.text},
           {"stage", stage_name(r.stage)},
           {"source_example_ids", r.source_example_ids}};
}

inline Rule rule_from_json(const json& j) {
  Rule r;
  r.index = j.at("index").get<std::size_t>();
  r.text = j.at("text").get<std::string>();
  r.stage = parse_stage(j.value("stage", std::string("merged")));
  if (auto it = j.find("source_example_ids"); it != j.end())
    r.source_example_ids = it->get<std::vector<std::string>>();
  return r;
}

struct RuleSetProvenance {
  std::string dataset_id;
  std::size_t sample_size = 0;
  std::uint64_t seed = 0;
  std::string model_id;
};

struct RuleSet {
  std::vector<Rule> rules;
  RuleStage stage = RuleStage::kRaw;
  RuleSetProvenance provenance;

  std::size_t size() const noexcept { return rules.size(); }
  bool empty() const noexcept { return rules.empty(); }

  /// Indices must be 0..K-1 in order, texts nonempty, and a merged set may
  /// only hold merged rules.
  void validate() const {
    for (std::size_t i = 0; i < rules.size(); ++i) {
      if (rules[i].index != i)
        throw DataError("rule indices are not contiguous at position " +
                        std::to_string(i));
      if (rules[i].text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw DataError("rule " + std::to_string(i) + " has empty text");
      if (stage == RuleStage::kMerged && rules[i].stage != RuleStage::kMerged)
        throw DataError("merged rule set contains a raw rule");
    }
  }
};

inline void write_rules_jsonl(const std::filesystem::path& path,
                              const RuleSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : set.rules) out << json(r).dump() << '\n';
}

/// Loads a rule file. Unknown keys are ignored; rules are reordered by index.
inline RuleSet load_ruleset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read rule file " + path.string());
  RuleSet set;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      set.rules.push_back(rule_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError("malformed rule record in " + path.string() + ": " +
                      e.what());
    }
  }
  std::sort(set.rules.begin(), set.rules.end(),
            [](const Rule& a, const Rule& b) { return a.index < b.index; });
  const bool all_merged =
      std::all_of(set.rules.begin(), set.rules.end(),
                  [](const Rule& r) { return r.stage == RuleStage::kMerged; });
  set.stage = all_merged ? RuleStage::kMerged : RuleStage::kRaw;
  set.validate();
  return set;
}

// ---------------------------------------------------------------------------
// Stage 1: reasoning generation

struct ReasoningRecord {
  std::string example_id;
  int order_flag = 1;     // 1: chosen shown as A; 2: chosen shown as B
  char winner_label = 'A';
  std::string reasoning;
  std::string justification;
  bool failed = false;  // provider error, or no reasoning returned
  std::string error;
};

inline void to_json(json& j, const ReasoningRecord& r) {
  j = json{{"example_id", r.example_id},
           {"order_flag", r.order_flag},
           {"winner", std::string(1, r.winner_label)},
           {"reasoning", r.reasoning},
           {"justification", r.justification},
           {"failed", r.failed}};
  if (!r.error.empty()) j["error"] = r.error;
}

inline char winner_label_for(int order_flag) {
  if (order_flag == 1) return 'A';
  if (order_flag == 2) return 'B';
  throw ArgumentError("order_flag must be 1 or 2");
}

/// Flag 1 places the chosen response in slot A, flag 2 in slot B; the
/// winner line always names the chosen response's slot.
inline std::string build_justification_prompt(const PreferenceExample& example,
                                              int order_flag) {
  const char winner = winner_label_for(order_flag);
  const std::string chosen = chosen_conversation(example).serialize();
  const std::string rejected = rejected_conversation(example).serialize();
  return prompts::fill_template(
      prompts::kJustification,
      {{"conversation_a", order_flag == 1 ? chosen : rejected},
       {"conversation_b", order_flag == 1 ? rejected : chosen},
       {"winner", std::string(1, winner)}});
}

struct ExtractionOptions {
  SamplingParams sampling = defaults::kExtraction;
  std::string model_id;
  std::size_t concurrency = 4;
  std::size_t merge_chunk_size = 200;
};

/// One record per example, in input order. Order flags come from the
/// "extract.order_flags" substream of `seed`, one draw per example.
inline std::vector<ReasoningRecord> generate_reasoning(
    const std::vector<PreferenceExample>& examples, Provider& provider,
    std::uint64_t seed, const ExtractionOptions& options = {}) {
  if (examples.empty()) throw ArgumentError("no examples to reason over");
  Rng flags = Rng::substream(seed, "extract.order_flags");
  std::vector<ReasoningRecord> records(examples.size());
  std::vector<CompletionRequest> requests;
  requests.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto& rec = records[i];
    rec.example_id = examples[i].id;
    rec.order_flag = flags.bernoulli(0.5) ? 1 : 2;
    rec.winner_label = winner_label_for(rec.order_flag);
    requests.push_back(options.sampling.request(
        build_justification_prompt(examples[i], rec.order_flag),
        options.model_id,
        static_cast<std::int64_t>(mix64(seed ^ fnv1a64(rec.example_id)) >> 1)));
  }
  auto results = complete_batch(provider, requests, options.concurrency);
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& rec = records[i];
    if (!results[i]) {
      rec.failed = true;
      rec.error = results[i].error();
      continue;
    }
    rec.reasoning = results[i].value().reasoning;
    rec.justification = results[i].value().output;
    if (rec.reasoning.empty()) {
      rec.failed = true;
      rec.error = "provider returned no reasoning";
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Stage 2: rule extraction

/// Trims, and collapses internal whitespace runs to a single space.
inline std::string normalize_rule_text(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out += ' ';
      pending_space = false;
      out += static_cast<char>(c);
    }
  }
  return out;
}

/// Parses a JSON array of strings out of a model response, tolerating
/// markdown code fences and prose around the array.
inline std::optional<std::vector<std::string>> parse_string_array(
    std::string_view text) {
  std::string body(text);
  // Drop fence lines such as ```json and ```.
  for (auto pos = body.find("```"); pos != std::string::npos;
       pos = body.find("```")) {
    auto eol = body.find('\n', pos);
    body.erase(pos, eol == std::string::npos ? std::string::npos : eol - pos + 1);
  }
  const auto open = body.find('[');
  const auto close = body.rfind(']');
  if (open == std::string::npos || close == std::string::npos || close < open)
    return std::nullopt;
  json parsed = json::parse(body.substr(open, close - open + 1), nullptr,
                            /*allow_exceptions=*/false);
  if (!parsed.is_array()) return std::nullopt;
  std::vector<std::string> items;
  for (const auto& v : parsed) {
    if (!v.is_string()) return std::nullopt;
    items.push_back(v.get<std::string>());
  }
  return items;
}

/// Asks the provider for `prompt`, re-prompting once if the reply is not a
/// JSON array of strings.
inline std::vector<std::string> request_string_array(
    Provider& provider, const std::string& prompt,
    const ExtractionOptions& options, std::int64_t seed) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto reply = provider.complete(
        options.sampling.request(prompt, options.model_id, seed + attempt));
    if (auto items = parse_string_array(reply.output)) return *items;
  }
  throw ParseError("response is not a JSON array of strings after retry");
}

/// Raw rules stated in one reasoning chain. An empty array is legal.
inline std::vector<Rule> extract_rules(const ReasoningRecord& record,
                                       Provider& provider,
                                       const ExtractionOptions& options = {}) {
  if (record.reasoning.empty())
    throw ArgumentError("record " + record.example_id + " has no reasoning");
  const std::string prompt = prompts::fill_template(
      prompts::kRuleExtraction,
      {{"winner", std::string(1, record.winner_label)},
       {"reasoning_chain", record.reasoning}});
  const auto seed =
      static_cast<std::int64_t>(mix64(fnv1a64(record.example_id)) >> 1);
  std::vector<Rule> rules;
  for (auto& text : request_string_array(provider, prompt, options, seed)) {
    auto norm = normalize_rule_text(text);
    if (norm.empty()) continue;
    Rule r;
    r.index = rules.size();
    r.text = std::move(norm);
    r.source_example_ids = {record.example_id};
    r.stage = RuleStage::kRaw;
    rules.push_back(std::move(r));
  }
  return rules;
}

// ---------------------------------------------------------------------------
// Stage 3: merging

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Normalizes texts and drops case-insensitive exact duplicates, keeping the
/// first occurrence and the union of source ids. Indices are reassigned.
inline std::vector<Rule> dedupe_rules(const std::vector<Rule>& rules) {
  std::vector<Rule> out;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& r : rules) {
    auto text = normalize_rule_text(r.text);
    if (text.empty()) continue;
    auto [it, inserted] = seen.emplace(lowercase(text), out.size());
    if (inserted) {
      Rule copy = r;
      copy.text = std::move(text);
      copy.index = out.size();
      out.push_back(std::move(copy));
      continue;
    }
    auto& ids = out[it->second].source_example_ids;
    for (const auto& id : r.source_example_ids)
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  }
  return out;
}

/// One rule per line, "- " prefixed like the extraction examples.
inline std::string render_rules_text(const std::vector<Rule>& rules) {
  std::string out;
  for (const auto& r : rules) {
    out += "- ";
    out += r.text;
    out += '\n';
  }
  return out;
}

struct MergeReport {
  RuleSet merged;
  std::size_t raw_count = 0;
  std::size_t deduped_count = 0;
  std::size_t merge_calls = 0;
  double compression_ratio = 0.0;  // |merged| / |raw|
  std::optional<std::string> warning;
};

inline constexpr double kMinExpectedCompression = 0.005;
inline constexpr double kMaxExpectedCompression = 0.10;

namespace detail {

inline std::vector<Rule> merge_once(const std::vector<Rule>& rules,
                                    Provider& provider,
                                    const ExtractionOptions& options,
                                    std::size_t call_index) {
  const std::string prompt = prompts::fill_template(
      prompts::kRuleMerging, {{"rules_text", render_rules_text(rules)}});
  std::vector<Rule> merged;
  const auto seed = static_cast<std::int64_t>(mix64(call_index) >> 1);
  for (auto& text : request_string_array(provider, prompt, options, seed)) {
    auto norm = normalize_rule_text(text);
    if (norm.empty()) continue;
    Rule r;
    r.text = std::move(norm);
    r.stage = RuleStage::kMerged;
    merged.push_back(std::move(r));
  }
  return dedupe_rules(merged);
}

}  // namespace detail

/// Consolidates a raw rule set. Sets larger than options.merge_chunk_size
/// are merged chunk by chunk first, then the concatenation is merged again.
/// A ratio outside the expected compression band produces a warning only.
inline MergeReport merge_rules(const RuleSet& raw, Provider& provider,
                               const ExtractionOptions& options = {}) {
  if (raw.empty()) throw ArgumentError("cannot merge an empty rule set");
  if (options.merge_chunk_size == 0)
    throw ArgumentError("merge_chunk_size must be >= 1");
  MergeReport report;
  report.raw_count = raw.size();
  std::vector<Rule> current = dedupe_rules(raw.rules);
  report.deduped_count = current.size();

  while (current.size() > options.merge_chunk_size) {
    std::vector<Rule> next;
    for (std::size_t begin = 0; begin < current.size();
         begin += options.merge_chunk_size) {
      const auto end = std::min(current.size(), begin + options.merge_chunk_size);
      std::vector<Rule> chunk(current.begin() + begin, current.begin() + end);
      auto part = detail::merge_once(chunk, provider, options, report.merge_calls++);
      next.insert(next.end(), part.begin(), part.end());
    }
    next = dedupe_rules(next);
    const bool shrank = next.size() < current.size();
    current = std::move(next);
    if (!shrank) break;
  }
  auto final_rules =
      detail::merge_once(current, provider, options, report.merge_calls++);
  if (final_rules.empty()) throw ParseError("merge produced no rules");

  report.merged.stage = RuleStage::kMerged;
  report.merged.provenance = raw.provenance;
  report.merged.provenance.model_id = options.model_id;
  for (std::size_t i = 0; i < final_rules.size(); ++i) {
    final_rules[i].index = i;
    final_rules[i].stage = RuleStage::kMerged;
    final_rules[i].source_example_ids.clear();
  }
  report.merged.rules = std::move(final_rules);
  report.compression_ratio = static_cast<double>(report.merged.size()) /
                             static_cast<double>(report.raw_count);
  if (report.compression_ratio < kMinExpectedCompression ||
      report.compression_ratio > kMaxExpectedCompression) {
    report.warning = "compression ratio " +
                     std::to_string(report.compression_ratio) +
                     " outside expected band [0.005, 0.10]";
  }
  return report;
}

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineConfig {
  std::size_t sample_size = 256;
  std::uint64_t seed = 42;
  std::string dataset_id;
  ExtractionOptions options;
  /// Artifacts are written here when set.
  std::optional<std::filesystem::path> output_dir;
  /// Extra keys copied into the manifest (config snapshot, timestamps).
  json manifest_extra = json::object();
};

struct PipelineResult {
  std::vector<std::string> sampled_ids;
  std::vector<ReasoningRecord> records;
  RuleSet raw;
  MergeReport merge;
  std::size_t stage1_failures = 0;
  std::size_t stage2_failures = 0;
  std::vector<std::string> notes;
  json manifest;
};

/// Samples, runs all three stages, and (optionally) persists
/// reasoning.jsonl, raw_rules.jsonl, merged_rules.jsonl and manifest.json.
/// Aborts when more than half of the stage-1 or stage-2 items fail.
inline PipelineResult run_extraction_pipeline(
    const std::vector<PreferenceExample>& dataset, Provider& provider,
    const PipelineConfig& config) {
  if (dataset.empty()) throw ArgumentError("empty dataset");
  if (config.sample_size == 0) throw ArgumentError("sample_size must be >= 1");
  PipelineResult result;

  std::size_t take = config.sample_size;
  if (take > dataset.size()) {
    result.notes.push_back("sample_size " + std::to_string(take) +
                           " exceeds dataset size " +
                           std::to_string(dataset.size()) +
                           "; using the full dataset");
    take = dataset.size();
  }
  Rng sampler = Rng::substream(config.seed, "extract.sample");
  std::vector<PreferenceExample> sample;
  for (auto i : sampler.sample_without_replacement(dataset.size(), take)) {
    sample.push_back(dataset[i]);
    result.sampled_ids.push_back(dataset[i].id);
  }

  result.records = generate_reasoning(sample, provider, config.seed, config.options);
  for (const auto& r : result.records) result.stage1_failures += r.failed;
  if (2 * result.stage1_failures > result.records.size())
    throw Error("stage 1 aborted: " + std::to_string(result.stage1_failures) +
                " of " + std::to_string(result.records.size()) +
                " reasoning requests failed");

  std::vector<const ReasoningRecord*> usable;
  for (const auto& r : result.records)
    if (!r.failed) usable.push_back(&r);
  std::vector<std::optional<Outcome<std::vector<Rule>>>> extracted(usable.size());
  parallel_for(usable.size(), config.options.concurrency, [&](std::size_t i) {
    try {
      extracted[i] = Outcome<std::vector<Rule>>::success(
          extract_rules(*usable[i], provider, config.options));
    } catch (const std::exception& e) {
      extracted[i] = Outcome<std::vector<Rule>>::failure(e.what());
    }
  });
  for (std::size_t i = 0; i < extracted.size(); ++i) {
    if (!*extracted[i]) {
      ++result.stage2_failures;
      result.notes.push_back("rule extraction failed for " +
                             usable[i]->example_id + ": " +
                             extracted[i]->error());
      continue;
    }
    for (auto rule : extracted[i]->value()) {
      rule.index = result.raw.rules.size();
      result.raw.rules.push_back(std::move(rule));
    }
  }
  if (2 * result.stage2_failures > usable.size())
    throw Error("stage 2 aborted: " + std::to_string(result.stage2_failures) +
                " of " + std::to_string(usable.size()) +
                " extraction requests failed");

  result.raw.stage = RuleStage::kRaw;
  result.raw.provenance = {config.dataset_id, take, config.seed,
                           config.options.model_id};
  if (result.raw.empty()) throw Error("no rules were extracted");
  result.merge = merge_rules(result.raw, provider, config.options);
  if (result.merge.warning) result.notes.push_back(*result.merge.warning);

  json manifest = config.manifest_extra;
  manifest["seed"] = config.seed;
  manifest["dataset_id"] = config.dataset_id;
  manifest["model_id"] = config.options.model_id;
  manifest["sample_size_requested"] = config.sample_size;
  manifest["sample_size_used"] = take;
  manifest["sampled_ids"] = result.sampled_ids;
  manifest["counts"] = {{"reasoning_records", result.records.size()},
                        {"stage1_failures", result.stage1_failures},
                        {"stage2_failures", result.stage2_failures},
                        {"raw_rules", result.raw.size()},
                        {"deduped_rules", result.merge.deduped_count},
                        {"merged_rules", result.merge.merged.size()},
                        {"merge_calls", result.merge.merge_calls}};
  manifest["compression_ratio"] = result.merge.compression_ratio;
  manifest["sampling"] = {{"temperature", config.options.sampling.temperature},
                          {"top_p", config.options.sampling.top_p},
                          {"max_new_tokens", config.options.sampling.max_new_tokens}};
  manifest["merge_chunk_size"] = config.options.merge_chunk_size;
  manifest["notes"] = result.notes;
  manifest["artifacts"] = {"reasoning.jsonl", "raw_rules.jsonl",
                           "merged_rules.jsonl"};
  result.manifest = manifest;

  if (config.output_dir) {
    const auto& dir = *config.output_dir;
    std::filesystem::create_directories(dir);
    {
      std::ofstream out(dir / "reasoning.jsonl", std::ios::binary);
      for (const auto& r : result.records) out << json(r).dump() << '\n';
    }
    write_rules_jsonl(dir / "raw_rules.jsonl", result.raw);
    write_rules_jsonl(dir / "merged_rules.jsonl", result.merge.merged);
    std::ofstream(dir / "manifest.json", std::ios::binary)
        << manifest.dump(2) << '\n';
  }
  return result;
}

}  // namespace rulekit

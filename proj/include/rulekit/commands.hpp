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

// Run configuration and the command implementations behind the CLI. Each
// command reads its inputs, writes artifacts under the output directory and
// finishes with a manifest.json that records the full config snapshot.

#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rulekit/analytics.hpp"
#include "rulekit/data_model.hpp"
#include "rulekit/error.hpp"
#include "rulekit/grpo.hpp"
#include "rulekit/openai_provider.hpp"
#include "rulekit/provider.hpp"
#include "rulekit/reward.hpp"
#include "rulekit/rule_extraction.hpp"
#include "rulekit/rule_verifier.hpp"
#include "rulekit/synthetic_provider.hpp"
#include "rulekit/version.hpp"

namespace rulekit {

namespace fs = std::filesystem;

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ProviderSpec {
  std::string type = "synthetic";  // "synthetic" or "openai"
  std::string base_url;
  std::string model;
  std::string api_key_env;
  int timeout_s = 120;
};

struct RunConfig {
  std::uint64_t seed = 0;
  fs::path output_dir = "out";
  std::size_t concurrency = 4;
  std::map<std::string, ProviderSpec> providers;  // extractor, verifier, judge

  std::optional<fs::path> dataset;
  FilterConfig filter;
  bool filter_enabled = true;

  std::size_t sample_size = 256;
  std::size_t merge_chunk_size = 200;
  std::string dataset_id;

  std::optional<fs::path> rules;
  std::optional<std::size_t> max_pairs;
  VerifierConfig verifier;

  RewardConfig reward;
  std::optional<fs::path> score_judgments;
  std::optional<fs::path> agree_judgments;
  std::optional<fs::path> judgments_b;
  std::optional<fs::path> score_inputs;
  std::size_t histogram_bins = 20;

  GrpoConfig grpo;
  ToyEnvironment toy = default_toy_environment();
  json toy_rules_spec = json::array();

  std::optional<fs::path> candidate;
  std::optional<fs::path> reference;

  json raw = json::object();  // snapshot as given, after overrides
  fs::path base_dir = ".";     // relative paths in `raw` resolve here
};

namespace config_detail {

template <class T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

inline void read_path(const json& j, const char* key, const fs::path& base,
                      std::optional<fs::path>& out) {
  if (auto it = j.find(key); it != j.end() && it->is_string()) {
    fs::path p = it->get<std::string>();
    out = p.is_absolute() ? p : base / p;
  }
}

inline SyntheticRule toy_rule_from_json(const json& r) {
  const auto kind = r.at("kind").get<std::string>();
  const auto arg = r.at("arg").get<int>();
  if (kind == "contains_token") return synthetic::contains_token(arg);
  if (kind == "distinct_at_least")
    return synthetic::distinct_at_least(static_cast<std::size_t>(arg));
  if (kind == "ends_with") return synthetic::ends_with(arg);
  if (kind == "starts_with") return synthetic::starts_with(arg);
  throw ConfigError("unknown toy rule kind '" + kind + "'");
}

}  // namespace config_detail

/// Parses a config document. Relative paths resolve against `base_dir`.
inline RunConfig parse_run_config(const json& j, const fs::path& base_dir = ".") {
  using namespace config_detail;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  c.raw = j;
  c.base_dir = fs::absolute(base_dir).lexically_normal();
  if (!j.contains("seed") || !j["seed"].is_number_integer())
    throw ConfigError("config requires an integer 'seed'");
  c.seed = j["seed"].get<std::uint64_t>();
  if (auto it = j.find("output_dir"); it != j.end() && it->is_string()) {
    fs::path p = it->get<std::string>();
    c.output_dir = p.is_absolute() ? p : base_dir / p;
  }
  read(j, "concurrency", c.concurrency);
  if (c.concurrency == 0) throw ConfigError("concurrency must be >= 1");

  for (const char* role : {"extractor", "verifier", "judge"}) c.providers[role] = {};
  if (auto it = j.find("providers"); it != j.end()) {
    for (const auto& [role, spec] : it->items()) {
      ProviderSpec p;
      read(spec, "type", p.type);
      read(spec, "base_url", p.base_url);
      read(spec, "model", p.model);
      read(spec, "api_key_env", p.api_key_env);
      read(spec, "timeout_s", p.timeout_s);
      if (p.type != "synthetic" && p.type != "openai")
        throw ConfigError("provider '" + role + "' has unknown type '" + p.type + "'");
      if (p.type == "openai" && p.base_url.empty())
        throw ConfigError("provider '" + role + "' needs a base_url");
      c.providers[role] = p;
    }
  }

  read_path(j, "dataset", base_dir, c.dataset);
  if (auto f = j.find("filter"); f != j.end()) {
    read(*f, "enabled", c.filter_enabled);
    read(*f, "max_tokens", c.filter.max_tokens);
    read(*f, "require_score_gap", c.filter.require_score_gap);
    read(*f, "banned_substring", c.filter.banned_substring);
    c.filter.validate();
  }
  if (auto e = j.find("extract"); e != j.end()) {
    read(*e, "sample_size", c.sample_size);
    read(*e, "merge_chunk_size", c.merge_chunk_size);
    read(*e, "dataset_id", c.dataset_id);
  }
  if (auto v = j.find("verifier"); v != j.end()) {
    read(*v, "concise_mode", c.verifier.concise_mode);
    read(*v, "temperature", c.verifier.sampling.temperature);
    read(*v, "max_new_tokens", c.verifier.sampling.max_new_tokens);
    read(*v, "max_retries", c.verifier.max_retries);
    c.verifier.validate();
  }
  if (auto jd = j.find("judge"); jd != j.end()) {
    read_path(*jd, "rules", base_dir, c.rules);
    if (jd->contains("max_pairs")) {
      std::size_t n = 0;
      read(*jd, "max_pairs", n);
      c.max_pairs = n;
    }
  }
  if (auto r = j.find("reward"); r != j.end()) {
    read(*r, "alpha", c.reward.alpha);
    read(*r, "beta", c.reward.beta);
    read(*r, "beta_kl", c.reward.beta_kl);
    int version = static_cast<int>(c.reward.kl_version);
    read(*r, "kl_version", version);
    if (version != 1 && version != 2) throw ConfigError("kl_version must be 1 or 2");
    c.reward.kl_version = static_cast<KlEstimator>(version);
    read(*r, "length_penalty_enabled", c.reward.length_penalty_enabled);
    read(*r, "target_length", c.reward.target_length);
    read(*r, "use_scaled_rule_reward", c.reward.use_scaled_rule_reward);
    c.reward.validate();
  }
  if (auto s = j.find("score"); s != j.end()) {
    read_path(*s, "judgments", base_dir, c.score_judgments);
    read_path(*s, "inputs", base_dir, c.score_inputs);
  }
  if (auto a = j.find("agree"); a != j.end()) {
    read_path(*a, "judgments", base_dir, c.agree_judgments);
    read_path(*a, "judgments_b", base_dir, c.judgments_b);
    read(*a, "bins", c.histogram_bins);
  }
  if (auto g = j.find("grpo"); g != j.end()) {
    read(*g, "clip_epsilon", c.grpo.clip_epsilon);
    read(*g, "group_size", c.grpo.group_size);
    read(*g, "advantage_epsilon", c.grpo.advantage_epsilon);
    read(*g, "learning_rate", c.grpo.learning_rate);
    read(*g, "steps", c.grpo.steps);
    read(*g, "prompts_per_step", c.grpo.prompts_per_step);
    read(*g, "update_epochs", c.grpo.update_epochs);
    std::string opt = "adam";
    read(*g, "optimizer", opt);
    if (opt != "adam" && opt != "sgd") throw ConfigError("optimizer must be adam or sgd");
    c.grpo.optimizer = opt == "adam" ? OptimizerKind::kAdam : OptimizerKind::kSgd;
    std::string std_conv = "population";
    read(*g, "std", std_conv);
    if (std_conv != "population" && std_conv != "sample")
      throw ConfigError("grpo.std must be population or sample");
    c.grpo.std_convention =
        std_conv == "population" ? StdConvention::kPopulation : StdConvention::kSample;
  }
  c.grpo.seed = c.seed;
  if (auto t = j.find("toy"); t != j.end()) {
    read(*t, "vocab_size", c.toy.vocab_size);
    read(*t, "seq_len", c.toy.seq_len);
    if (auto rules = t->find("rules"); rules != t->end()) {
      c.toy_rules_spec = *rules;
      c.toy.rules.clear();
      for (const auto& r : *rules) c.toy.rules.push_back(toy_rule_from_json(r));
    }
  }
  c.toy.reward = c.reward;
  if (auto w = j.find("winrate"); w != j.end()) {
    read_path(*w, "candidate", base_dir, c.candidate);
    read_path(*w, "reference", base_dir, c.reference);
  }
  return c;
}

inline RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  return parse_run_config(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

/// Applies command-line overrides and keeps the snapshot in sync.
inline void apply_overrides(RunConfig& c, const std::optional<fs::path>& out,
                            const std::optional<std::uint64_t>& seed,
                            const std::optional<std::size_t>& concurrency) {
  if (out) {
    c.output_dir = *out;
    c.raw["output_dir"] = out->string();
  }
  if (seed) {
    c.seed = *seed;
    c.grpo.seed = *seed;
    c.raw["seed"] = *seed;
  }
  if (concurrency) {
    if (*concurrency == 0) throw ConfigError("concurrency must be >= 1");
    c.concurrency = *concurrency;
    c.raw["concurrency"] = *concurrency;
  }
}

inline std::unique_ptr<Provider> make_provider(const RunConfig& c, const std::string& role) {
  const auto& spec = c.providers.at(role);
  if (spec.type == "synthetic")
    return std::make_unique<SyntheticProvider>(Rng::substream(c.seed, "provider." + role).next_u64());
  EndpointConfig ep;
  ep.base_url = spec.base_url;
  ep.model_id = spec.model;
  ep.api_key_env = spec.api_key_env;
  ep.timeout = std::chrono::seconds(spec.timeout_s);
  return std::make_unique<OpenAICompatibleProvider>(ep);
}

namespace command_detail {

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Keys every manifest carries. "created_at" is the only nondeterministic
/// field.
inline json manifest_base(const RunConfig& c, const std::string& command) {
  return json{{"command", command},
              {"config", c.raw},
              {"config_base_dir", c.base_dir.string()},
              {"seed", c.seed},
              {"version", kVersion},
              {"created_at", utc_timestamp()}};
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

template <class Range>
void write_jsonl(const fs::path& path, const Range& items) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& item : items) out << json(item).dump() << '\n';
}

inline std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw DataError(path.string() + ":" + std::to_string(n) + ": malformed JSON");
    rows.push_back(std::move(j));
  }
  return rows;
}

template <class T>
const T& require(const std::optional<T>& v, const char* what) {
  if (!v) throw ConfigError(std::string("missing required input: ") + what);
  return *v;
}

inline std::vector<PreferenceExample> load_examples(const RunConfig& c) {
  return load_dataset(require(c.dataset, "dataset")).examples;
}

inline std::vector<RuleJudgment> load_judgments(const fs::path& path) {
  std::vector<RuleJudgment> out;
  for (const auto& row : read_jsonl(path)) out.push_back(rule_judgment_from_json(row));
  if (out.empty()) throw DataError("no judgments in " + path.string());
  return out;
}

/// Splits "<example_id>:<side>" references.
inline std::pair<std::string, std::string> split_ref(const std::string& ref) {
  const auto colon = ref.rfind(':');
  if (colon == std::string::npos) return {ref, ""};
  return {ref.substr(0, colon), ref.substr(colon + 1)};
}

/// Groups judgments by conversation_ref (first appearance order), each
/// group ordered by rule index.
inline std::vector<std::pair<std::string, std::vector<RuleJudgment>>> group_by_ref(
    const std::vector<RuleJudgment>& judgments) {
  std::vector<std::pair<std::string, std::vector<RuleJudgment>>> groups;
  std::map<std::string, std::size_t> where;
  for (const auto& jd : judgments) {
    auto [it, inserted] = where.emplace(jd.conversation_ref, groups.size());
    if (inserted) groups.push_back({jd.conversation_ref, {}});
    groups[it->second].second.push_back(jd);
  }
  for (auto& [ref, list] : groups) {
    std::sort(list.begin(), list.end(),
              [](const RuleJudgment& a, const RuleJudgment& b) { return a.rule_index < b.rule_index; });
    for (std::size_t i = 0; i < list.size(); ++i)
      if (list[i].rule_index != i)
        throw DataError("judgments for " + ref + " do not cover rules 0..K-1");
  }
  return groups;
}

/// Rebuilds per-pair verdict vectors from "<id>:chosen" / "<id>:rejected"
/// judgment groups. Parse failures become kMissingVerdict.
inline std::vector<JudgedPair> judged_pairs(const std::vector<RuleJudgment>& judgments) {
  std::vector<JudgedPair> pairs;
  std::map<std::string, std::size_t> where;
  for (const auto& [ref, list] : group_by_ref(judgments)) {
    auto [id, side] = split_ref(ref);
    if (side != "chosen" && side != "rejected")
      throw DataError("conversation_ref '" + ref + "' lacks a :chosen/:rejected side");
    auto [it, inserted] = where.emplace(id, pairs.size());
    if (inserted) pairs.push_back({id, {}, {}, true});
    auto& verdicts = side == "chosen" ? pairs[it->second].chosen : pairs[it->second].rejected;
    for (const auto& jd : list) verdicts.push_back(jd.parse_failed ? kMissingVerdict : jd.verdict);
  }
  std::vector<JudgedPair> complete;
  for (auto& p : pairs)
    if (!p.chosen.empty() && p.chosen.size() == p.rejected.size()) complete.push_back(std::move(p));
  if (complete.empty()) throw DataError("no complete chosen/rejected judgment pairs");
  return complete;
}

}  // namespace command_detail

// ---------------------------------------------------------------------------

struct CommandResult {
  fs::path output_dir;
  json manifest;
};

inline CommandResult cmd_extract(const RunConfig& c) {
  using namespace command_detail;
  auto examples = load_examples(c);
  const std::size_t loaded = examples.size();
  if (c.filter_enabled) examples = filter_examples(examples, c.filter);
  if (examples.empty()) throw DataError("no examples survive filtering");
  auto provider = make_provider(c, "extractor");

  PipelineConfig pc;
  pc.sample_size = c.sample_size;
  pc.seed = c.seed;
  pc.dataset_id = c.dataset_id.empty() && c.dataset ? c.dataset->filename().string() : c.dataset_id;
  pc.options.model_id = c.providers.at("extractor").model;
  pc.options.concurrency = c.concurrency;
  pc.options.merge_chunk_size = c.merge_chunk_size;
  pc.output_dir = c.output_dir;
  pc.manifest_extra = manifest_base(c, "extract");
  pc.manifest_extra["examples_loaded"] = loaded;
  pc.manifest_extra["examples_after_filter"] = examples.size();
  auto result = run_extraction_pipeline(examples, *provider, pc);
  return {c.output_dir, result.manifest};
}

inline CommandResult cmd_judge(const RunConfig& c) {
  using namespace command_detail;
  auto examples = load_examples(c);
  if (c.max_pairs && examples.size() > *c.max_pairs) examples.resize(*c.max_pairs);
  const RuleSet rules = load_ruleset(require(c.rules, "judge.rules"));
  auto provider = make_provider(c, "verifier");
  VerifierConfig vc = c.verifier;
  vc.model_id = c.providers.at("verifier").model;
  vc.concurrency = c.concurrency;

  std::vector<RuleJudgment> all;
  std::size_t parse_failures = 0;
  for (const auto& e : examples) {
    for (const char* side : {"chosen", "rejected"}) {
      const auto conv = std::string(side) == "chosen" ? chosen_conversation(e)
                                                      : rejected_conversation(e);
      auto scored = judge_all(rules, conv, e.id + ":" + side, *provider, vc);
      for (auto& jd : scored.judgments) {
        parse_failures += jd.parse_failed;
        all.push_back(std::move(jd));
      }
    }
  }
  fs::create_directories(c.output_dir);
  write_jsonl(c.output_dir / "judgments.jsonl", all);
  json manifest = manifest_base(c, "judge");
  manifest["counts"] = {{"pairs", examples.size()},
                        {"rules", rules.size()},
                        {"judgments", all.size()},
                        {"parse_failures", parse_failures}};
  manifest["artifacts"] = {"judgments.jsonl"};
  write_json(c.output_dir / "manifest.json", manifest);
  return {c.output_dir, manifest};
}

inline CommandResult cmd_score(const RunConfig& c) {
  using namespace command_detail;
  const auto judgments = load_judgments(require(c.score_judgments, "score.judgments"));
  std::map<std::string, json> inputs;
  if (c.score_inputs)
    for (auto& row : read_jsonl(*c.score_inputs))
      inputs[row.at("conversation_ref").get<std::string>()] = row;

  std::vector<json> rows;
  for (const auto& [ref, list] : group_by_ref(judgments)) {
    std::vector<int> scores;
    for (const auto& jd : list) scores.push_back(jd.verdict);
    const json in = inputs.count(ref) ? inputs[ref] : json::object();
    if (c.reward.length_penalty_enabled && !in.contains("response_length"))
      throw DataError("length penalty enabled but no response_length for " + ref);
    const auto b = total_reward(scores, in.value("r_model", 0.0), in.value("logp_policy", 0.0),
                                in.value("logp_ref", 0.0), in.value("response_length", 0L),
                                c.reward);
    json row = b;
    row["conversation_ref"] = ref;
    row["scores"] = scores;
    rows.push_back(std::move(row));
  }
  fs::create_directories(c.output_dir);
  write_jsonl(c.output_dir / "scores.jsonl", rows);
  json manifest = manifest_base(c, "score");
  manifest["counts"] = {{"conversations", rows.size()}, {"judgments", judgments.size()}};
  manifest["artifacts"] = {"scores.jsonl"};
  write_json(c.output_dir / "manifest.json", manifest);
  return {c.output_dir, manifest};
}

inline json ranked_to_json(const std::vector<RankedRule>& list) {
  json out = json::array();
  for (const auto& r : list)
    out.push_back({{"set", r.side == RuleSide::kA ? "a" : "b"},
                   {"rule_index", r.index},
                   {"max_agreement", r.max_agreement}});
  return out;
}

inline CommandResult cmd_agree(const RunConfig& c) {
  using namespace command_detail;
  const auto pairs_a = judged_pairs(load_judgments(require(c.agree_judgments, "agree.judgments")));
  const auto pairs_b =
      c.judgments_b ? judged_pairs(load_judgments(*c.judgments_b)) : pairs_a;

  const auto stats = individual_rule_agreement(pairs_a);
  const auto deltas = rule_score_deltas(pairs_a, uniform_edges(c.histogram_bins));
  const auto matrix = agreement_matrix(pairs_a, pairs_b);
  const auto ranked = unique_similar_rules(matrix);

  fs::create_directories(c.output_dir);
  json report{{"agreement", stats},
              {"deltas",
               {{"mean", deltas.mean},
                {"positive", deltas.positive},
                {"negative", deltas.negative},
                {"zero", deltas.zero},
                {"histogram",
                 {{"edges", deltas.histogram.edges}, {"counts", deltas.histogram.counts}}}}},
              {"unique", ranked_to_json(ranked.unique)},
              {"similar", ranked_to_json(ranked.similar)}};
  write_json(c.output_dir / "agreement.json", report);
  {
    std::vector<json> rows;
    for (const auto& d : deltas.records)
      rows.push_back({{"example_id", d.example_id}, {"delta", d.delta}});
    write_jsonl(c.output_dir / "deltas.jsonl", rows);
  }
  write_json(c.output_dir / "matrix.json", matrix_to_json(matrix));
  std::ofstream(c.output_dir / "matrix.csv", std::ios::binary) << matrix_to_csv(matrix);

  json manifest = manifest_base(c, "agree");
  manifest["counts"] = {{"pairs", pairs_a.size()}, {"rules_a", matrix.rows}, {"rules_b", matrix.cols}};
  manifest["artifacts"] = {"agreement.json", "deltas.jsonl", "matrix.json", "matrix.csv"};
  write_json(c.output_dir / "manifest.json", manifest);
  return {c.output_dir, manifest};
}

inline CommandResult cmd_train_toy(const RunConfig& c) {
  using namespace command_detail;
  fs::create_directories(c.output_dir);
  const auto result = train_toy(c.toy, c.grpo, c.output_dir / "metrics.jsonl");
  write_json(c.output_dir / "final_policy.json", result.policy.to_json());
  json manifest = manifest_base(c, "train-toy");
  json rule_names = json::array();
  for (const auto& r : c.toy.rules) rule_names.push_back(r.name);
  manifest["rules"] = rule_names;
  manifest["final"] = result.curve.empty() ? json(nullptr) : json(result.curve.back());
  manifest["artifacts"] = {"metrics.jsonl", "final_policy.json"};
  write_json(c.output_dir / "manifest.json", manifest);
  return {c.output_dir, manifest};
}

inline CommandResult cmd_winrate(const RunConfig& c) {
  using namespace command_detail;
  std::map<std::string, json> refs;
  for (auto& row : read_jsonl(require(c.reference, "winrate.reference")))
    refs[row.at("id").get<std::string>()] = row;
  std::vector<WinRateItem> items;
  for (const auto& row : read_jsonl(require(c.candidate, "winrate.candidate"))) {
    const auto id = row.at("id").get<std::string>();
    auto it = refs.find(id);
    if (it == refs.end()) throw DataError("no reference output for id " + id);
    items.push_back({id, row.at("instruction").get<std::string>(),
                     row.at("output").get<std::string>(),
                     it->second.at("output").get<std::string>()});
  }
  auto judge = make_provider(c, "judge");
  WinRateOptions opts;
  opts.model_id = c.providers.at("judge").model;
  opts.concurrency = c.concurrency;
  const auto report = win_rate(items, *judge, c.seed, opts);

  fs::create_directories(c.output_dir);
  write_jsonl(c.output_dir / "winrate_records.jsonl", report.records);
  const json summary{{"win_rate", report.win_rate},
                     {"wins", report.wins},
                     {"judged", report.judged},
                     {"excluded", report.excluded}};
  write_json(c.output_dir / "winrate.json", summary);
  json manifest = manifest_base(c, "winrate");
  manifest["result"] = summary;
  manifest["artifacts"] = {"winrate.json", "winrate_records.jsonl"};
  write_json(c.output_dir / "manifest.json", manifest);
  return {c.output_dir, manifest};
}

}  // namespace rulekit

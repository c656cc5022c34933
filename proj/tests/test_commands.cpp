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

#include <filesystem>
#include <map>
#include <string>

#include "rulekit/commands.hpp"
#include "support/temp_dir.hpp"

namespace rulekit {
namespace {

namespace fs = std::filesystem;
using testing::read_file;
using testing::TempDir;
using testing::write_file;

std::string preferences_jsonl(std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    json row{{"id", "ex" + std::to_string(i)},
             {"prompt", "Question number " + std::to_string(i) + "?"},
             {"chosen", "A careful and correct answer " + std::to_string(i) + "."},
             {"rejected", "Not sure."},
             {"chosen_score", 9.0},
             {"rejected_score", 3.0}};
    out += row.dump() + "\n";
  }
  return out;
}

std::string judgments_jsonl(std::size_t pairs, std::size_t rules, int chosen_verdict, int rejected_verdict) {
  std::string out;
  for (std::size_t p = 0; p < pairs; ++p)
    for (const char* side : {"chosen", "rejected"})
      for (std::size_t r = 0; r < rules; ++r) {
        RuleJudgment jd;
        jd.rule_index = r;
        jd.conversation_ref = "ex" + std::to_string(p) + ":" + side;
        jd.verdict = std::string(side) == "chosen" ? chosen_verdict : rejected_verdict;
        jd.raw_response = jd.verdict ? "[[Yes]]" : "[[No]]";
        out += json(jd).dump() + "\n";
      }
  return out;
}

class CommandsTest : public ::testing::Test {
 protected:
  void SetUp() override {
    write_file(dir_ / "prefs.jsonl", preferences_jsonl(16));
    fs::copy_file(std::string(RULEKIT_FIXTURES) + "/ultrafeedback_rules.jsonl", dir_ / "rules.jsonl");
    write_file(dir_ / "all_yes.jsonl", judgments_jsonl(3, 5, 1, 1));
    write_file(dir_ / "mixed.jsonl", judgments_jsonl(4, 3, 1, 0));
  }

  json base_config() const {
    return json{{"seed", 42},
                {"output_dir", "out"},
                {"concurrency", 2},
                {"dataset", "prefs.jsonl"},
                {"extract", {{"sample_size", 16}}},
                {"judge", {{"rules", "rules.jsonl"}, {"max_pairs", 4}}},
                {"score", {{"judgments", "all_yes.jsonl"}}},
                {"agree", {{"judgments", "mixed.jsonl"}, {"bins", 4}}},
                {"grpo", {{"steps", 10}}}};
  }

  RunConfig config(json j, const std::string& out) const {
    j["output_dir"] = out;
    return parse_run_config(j, dir_.path());
  }

  TempDir dir_;
};

TEST_F(CommandsTest, ParsesAndResolvesRelativePaths) {
  auto c = config(base_config(), "o");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.concurrency, 2u);
  EXPECT_EQ(*c.dataset, dir_.path() / "prefs.jsonl");
  EXPECT_EQ(c.output_dir, dir_.path() / "o");
  EXPECT_EQ(*c.max_pairs, 4u);
  EXPECT_EQ(c.providers.at("verifier").type, "synthetic");
  EXPECT_EQ(c.grpo.steps, 10u);
  EXPECT_EQ(c.grpo.seed, 42u);
}

TEST_F(CommandsTest, ConfigErrors) {
  auto j = base_config();
  j.erase("seed");
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = base_config();
  j["seed"] = "42";
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = base_config();
  j["providers"] = {{"verifier", {{"type", "carrier-pigeon"}}}};
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = base_config();
  j["providers"] = {{"verifier", {{"type", "openai"}}}};
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = base_config();
  j["grpo"]["optimizer"] = "rmsprop";
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = base_config();
  j["reward"] = {{"kl_version", 3}};
  EXPECT_THROW(parse_run_config(j), ConfigError);
  EXPECT_THROW(parse_run_config(json::array()), ConfigError);
  EXPECT_THROW(load_run_config(dir_ / "missing.json"), ConfigError);
  write_file(dir_ / "bad.json", "{not json");
  EXPECT_THROW(load_run_config(dir_ / "bad.json"), ConfigError);
}

TEST_F(CommandsTest, LoadResolvesAgainstConfigDirectory) {
  write_file(dir_ / "run.json", base_config().dump());
  auto c = load_run_config(dir_ / "run.json");
  EXPECT_EQ(*c.dataset, dir_.path() / "prefs.jsonl");
}

TEST_F(CommandsTest, OverridesUpdateSnapshot) {
  auto c = config(base_config(), "o");
  apply_overrides(c, dir_ / "elsewhere", 7, 3);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.grpo.seed, 7u);
  EXPECT_EQ(c.concurrency, 3u);
  EXPECT_EQ(c.raw["seed"], 7);
  EXPECT_EQ(c.raw["output_dir"], (dir_ / "elsewhere").string());
  EXPECT_THROW(apply_overrides(c, std::nullopt, std::nullopt, 0), ConfigError);
}

TEST_F(CommandsTest, OpenAiProviderBuiltFromConfig) {
  auto j = base_config();
  j["providers"] = {{"judge", {{"type", "openai"}, {"base_url", "http://127.0.0.1:1/v1"}, {"model", "m"}}}};
  auto c = config(j, "o");
  auto p = make_provider(c, "judge");
  EXPECT_NE(dynamic_cast<OpenAICompatibleProvider*>(p.get()), nullptr);
  EXPECT_NE(dynamic_cast<SyntheticProvider*>(make_provider(c, "verifier").get()), nullptr);
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string text = read_file(e.path());
    if (e.path().filename() == "manifest.json") {
      auto m = json::parse(text);
      m.erase("created_at");
      text = m.dump();
    }
    files[e.path().filename().string()] = text;
  }
  return files;
}

TEST_F(CommandsTest, ExtractIsDeterministic) {
  auto c = config(base_config(), "extract");
  auto r = cmd_extract(c);
  const auto first = snapshot(r.output_dir);
  for (const char* f : {"reasoning.jsonl", "raw_rules.jsonl", "merged_rules.jsonl", "manifest.json"})
    EXPECT_TRUE(first.count(f)) << f;
  EXPECT_EQ(r.manifest["command"], "extract");
  EXPECT_EQ(r.manifest["seed"], 42);
  EXPECT_EQ(r.manifest["counts"]["reasoning_records"], 16);
  cmd_extract(c);
  EXPECT_EQ(snapshot(r.output_dir), first);
}

TEST_F(CommandsTest, ExtractManifestIsSufficientToRerun) {
  auto c = config(base_config(), "extract");
  auto r = cmd_extract(c);
  const auto first = snapshot(r.output_dir);
  auto replay = parse_run_config(r.manifest["config"], r.manifest["config_base_dir"].get<std::string>());
  EXPECT_EQ(replay.output_dir, c.output_dir);
  cmd_extract(replay);
  EXPECT_EQ(snapshot(r.output_dir), first);
}

TEST_F(CommandsTest, ExtractAbortsWhenFilterRemovesEverything) {
  auto j = base_config();
  j["filter"] = {{"banned_substring", "answer"}};
  EXPECT_THROW(cmd_extract(config(j, "x")), DataError);
}

TEST_F(CommandsTest, JudgeCardinality) {
  auto r = cmd_judge(config(base_config(), "judge"));
  auto rows = command_detail::read_jsonl(r.output_dir / "judgments.jsonl");
  EXPECT_EQ(rows.size(), 200u);
  EXPECT_EQ(r.manifest["counts"]["judgments"], 200);
  std::map<std::string, int> per_ref;
  for (const auto& row : rows) ++per_ref[row["conversation_ref"].get<std::string>()];
  EXPECT_EQ(per_ref.size(), 8u);
  for (const auto& [ref, n] : per_ref) EXPECT_EQ(n, 25) << ref;
}

TEST_F(CommandsTest, ScoreAllYesMatchesRewardMath) {
  auto r = cmd_score(config(base_config(), "score"));
  auto rows = command_detail::read_jsonl(r.output_dir / "scores.jsonl");
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& row : rows) {
    EXPECT_DOUBLE_EQ(row["r_rule"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(row["r_rule_scaled"].get<double>(), 2.5);
    EXPECT_DOUBLE_EQ(row["total"].get<double>(), 2.5);
  }
}

TEST_F(CommandsTest, ScoreUsesPerConversationInputs) {
  write_file(dir_ / "inputs.jsonl",
             json{{"conversation_ref", "ex0:chosen"}, {"r_model", 1.0}, {"response_length", 600}}.dump() + "\n" +
                 json{{"conversation_ref", "ex0:rejected"}, {"response_length", 300}}.dump() + "\n");
  auto j = base_config();
  j["score"]["judgments"] = "mixed.jsonl";
  j["score"]["inputs"] = "inputs.jsonl";
  j["reward"] = {{"length_penalty_enabled", true}};
  j["judge"]["max_pairs"] = 1;
  // Only ex0 has lengths; trim the judgments to that pair.
  write_file(dir_ / "mixed.jsonl", judgments_jsonl(1, 3, 1, 0));
  auto r = cmd_score(config(j, "score2"));
  auto rows = command_detail::read_jsonl(r.output_dir / "scores.jsonl");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0]["total"].get<double>(), 2.5 + 1.0 - 0.5);
  EXPECT_DOUBLE_EQ(rows[1]["total"].get<double>(), -7.5);

  write_file(dir_ / "mixed.jsonl", judgments_jsonl(2, 3, 1, 0));
  EXPECT_THROW(cmd_score(config(j, "score3")), DataError);
}

TEST_F(CommandsTest, AgreeWritesReports) {
  auto r = cmd_agree(config(base_config(), "agree"));
  auto report = json::parse(read_file(r.output_dir / "agreement.json"));
  ASSERT_EQ(report["agreement"].size(), 3u);
  for (const auto& s : report["agreement"]) EXPECT_DOUBLE_EQ(s["agreement_pct"].get<double>(), 100.0);
  EXPECT_DOUBLE_EQ(report["deltas"]["mean"].get<double>(), 1.0);
  EXPECT_EQ(report["deltas"]["histogram"]["counts"].size(), 4u);
  auto matrix = json::parse(read_file(r.output_dir / "matrix.json"));
  EXPECT_EQ(matrix["rows"], 3);
  EXPECT_EQ(read_file(r.output_dir / "matrix.csv").substr(0, 12), "rule,b0,b1,b");
  EXPECT_EQ(command_detail::read_jsonl(r.output_dir / "deltas.jsonl").size(), 4u);
}

TEST_F(CommandsTest, CommandsDoNotMutateInputs) {
  const auto prefs = read_file(dir_ / "prefs.jsonl");
  const auto rules = read_file(dir_ / "rules.jsonl");
  const auto yes = read_file(dir_ / "all_yes.jsonl");
  const auto mixed = read_file(dir_ / "mixed.jsonl");
  auto c = config(base_config(), "all");
  cmd_extract(c);
  cmd_judge(c);
  cmd_score(c);
  cmd_agree(c);
  EXPECT_EQ(read_file(dir_ / "prefs.jsonl"), prefs);
  EXPECT_EQ(read_file(dir_ / "rules.jsonl"), rules);
  EXPECT_EQ(read_file(dir_ / "all_yes.jsonl"), yes);
  EXPECT_EQ(read_file(dir_ / "mixed.jsonl"), mixed);
}

TEST_F(CommandsTest, TrainToyWritesCurves) {
  auto r = cmd_train_toy(config(base_config(), "toy"));
  EXPECT_EQ(command_detail::read_jsonl(r.output_dir / "metrics.jsonl").size(), 10u);
  EXPECT_TRUE(fs::exists(r.output_dir / "final_policy.json"));
  EXPECT_EQ(r.manifest["rules"].size(), 3u);
  EXPECT_EQ(r.manifest["final"]["step"], 9);
}

TEST_F(CommandsTest, WinrateWritesSummary) {
  std::string cand, ref;
  for (int i = 0; i < 30; ++i) {
    cand += json{{"id", std::to_string(i)}, {"instruction", "do " + std::to_string(i)}, {"output", "c"}}.dump() + "\n";
    ref += json{{"id", std::to_string(i)}, {"instruction", "do " + std::to_string(i)}, {"output", "r"}}.dump() + "\n";
  }
  write_file(dir_ / "cand.jsonl", cand);
  write_file(dir_ / "ref.jsonl", ref);
  auto j = base_config();
  j["winrate"] = {{"candidate", "cand.jsonl"}, {"reference", "ref.jsonl"}};
  auto r = cmd_winrate(config(j, "wr"));
  auto summary = json::parse(read_file(r.output_dir / "winrate.json"));
  EXPECT_EQ(summary["judged"].get<int>() + summary["excluded"].get<int>(), 30);
  EXPECT_GE(summary["win_rate"].get<double>(), 0.0);
  EXPECT_LE(summary["win_rate"].get<double>(), 1.0);
  EXPECT_EQ(command_detail::read_jsonl(r.output_dir / "winrate_records.jsonl").size(), 30u);

  write_file(dir_ / "ref.jsonl", "");
  EXPECT_THROW(cmd_winrate(config(j, "wr2")), DataError);
}

TEST_F(CommandsTest, MissingInputsAreReported) {
  auto j = base_config();
  j.erase("score");
  EXPECT_THROW(cmd_score(config(j, "s")), ConfigError);
  j = base_config();
  j["dataset"] = "nope.jsonl";
  EXPECT_THROW(cmd_extract(config(j, "e")), Error);
}

}  // namespace
}  // namespace rulekit

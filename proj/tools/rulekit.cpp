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

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rulekit/commands.hpp"

namespace {

// Exit codes: 0 ok, 2 bad arguments or config, 3 data or provider failure.
int report_error(const std::string& command, const std::string& type,
                 const std::string& message, int code) {
  nlohmann::json record{{"error", {{"command", command}, {"type", type}, {"message", message}}}};
  std::cerr << record.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rule extraction, verification and rule-based reward tooling"};
  app.require_subcommand(1);
  app.set_version_flag("--version", rulekit::kVersion);

  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> concurrency;

  struct Sub {
    const char* name;
    const char* help;
    rulekit::CommandResult (*run)(const rulekit::RunConfig&);
  };
  const Sub subs[] = {
      {"extract", "Extract and merge rules from a preference dataset", rulekit::cmd_extract},
      {"judge", "Judge every rule against chosen and rejected responses", rulekit::cmd_judge},
      {"score", "Turn judgments into reward breakdowns", rulekit::cmd_score},
      {"agree", "Agreement statistics, score deltas and agreement matrix", rulekit::cmd_agree},
      {"train-toy", "GRPO on the toy categorical policy", rulekit::cmd_train_toy},
      {"winrate", "Pairwise win rate with randomized slot order", rulekit::cmd_winrate},
  };
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out, "Output directory (overrides config)");
    sub->add_option("--seed-override", seed, "Seed (overrides config)");
    sub->add_option("--concurrency", concurrency, "Parallel provider calls")
        ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report_error("", "ArgumentError", e.what(), 2);
  }

  const Sub* chosen = nullptr;
  for (const auto& s : subs)
    if (app.got_subcommand(s.name)) chosen = &s;

  try {
    auto config = rulekit::load_run_config(config_path);
    std::optional<std::filesystem::path> out_path;
    if (out) out_path = *out;
    rulekit::apply_overrides(config, out_path, seed, concurrency);
    const auto result = chosen->run(config);
    std::cout << nlohmann::json{{"command", chosen->name},
                                {"output_dir", result.output_dir.string()},
                                {"status", "ok"}}
                     .dump()
              << '\n';
    return 0;
  } catch (const rulekit::ConfigError& e) {
    return report_error(chosen->name, "ConfigError", e.what(), 2);
  } catch (const rulekit::ArgumentError& e) {
    return report_error(chosen->name, "ArgumentError", e.what(), 2);
  } catch (const rulekit::ProviderError& e) {
    return report_error(chosen->name, "ProviderError", e.what(), 3);
  } catch (const rulekit::DataError& e) {
    return report_error(chosen->name, "DataError", e.what(), 3);
  } catch (const std::exception& e) {
    return report_error(chosen->name, "Error", e.what(), 3);
  }
}

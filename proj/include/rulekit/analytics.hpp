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

// Rule-quality statistics and the pairwise win-rate harness.

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rulekit/error.hpp"
#include "rulekit/prompts.hpp"
#include "rulekit/provider.hpp"
#include "rulekit/rng.hpp"

namespace rulekit {

using json = nlohmann::json;

/// Verdict value for a judgment whose reply could not be parsed.
inline constexpr int kMissingVerdict = -1;

/// Per-rule verdicts on both responses of one preference pair. Verdicts are
/// 1, 0 or kMissingVerdict.
struct JudgedPair {
  std::string example_id;
  std::vector<int> chosen;
  std::vector<int> rejected;
  /// Ground-truth label; false swaps which side is preferred.
  bool chosen_preferred = true;
};

/// Side a rule prefers on one pair: +1 chosen, -1 rejected, 0 tie, or
/// nullopt if a verdict is missing.
inline std::optional<int> rule_preference(const JudgedPair& pair, std::size_t rule) {
  const int c = pair.chosen.at(rule);
  const int r = pair.rejected.at(rule);
  if (c == kMissingVerdict || r == kMissingVerdict) return std::nullopt;
  return c - r;
}

struct AgreementStats {
  std::size_t rule_index = 0;
  std::optional<double> agreement_pct;  // absent when no pair discriminates
  std::size_t matches = 0;
  std::size_t discriminative_pairs = 0;
  std::size_t total_pairs = 0;  // pairs with both verdicts present
  std::size_t dropped_pairs = 0;
};

inline void to_json(json& j, const AgreementStats& s) {
  j = json{{"rule_index", s.rule_index},
           {"agreement_pct", s.agreement_pct ? json(*s.agreement_pct) : json(nullptr)},
           {"matches", s.matches},
           {"discriminative_pairs", s.discriminative_pairs},
           {"total_pairs", s.total_pairs},
           {"dropped_pairs", s.dropped_pairs}};
}

inline std::size_t rule_count(std::span<const JudgedPair> pairs) {
  if (pairs.empty()) throw ArgumentError("no judged pairs");
  const std::size_t k = pairs.front().chosen.size();
  for (const auto& p : pairs)
    if (p.chosen.size() != k || p.rejected.size() != k)
      throw ArgumentError("pair " + p.example_id + " has a different rule count");
  return k;
}

/// For each rule: among pairs where its verdicts on the two sides differ,
/// the percentage where it prefers the labelled side.
inline std::vector<AgreementStats> individual_rule_agreement(
    std::span<const JudgedPair> pairs) {
  const std::size_t k = rule_count(pairs);
  std::vector<AgreementStats> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    auto& s = out[i];
    s.rule_index = i;
    for (const auto& p : pairs) {
      const auto pref = rule_preference(p, i);
      if (!pref) {
        ++s.dropped_pairs;
        continue;
      }
      ++s.total_pairs;
      if (*pref == 0) continue;
      ++s.discriminative_pairs;
      const int truth = p.chosen_preferred ? 1 : -1;
      s.matches += (*pref == truth);
    }
    if (s.discriminative_pairs > 0)
      s.agreement_pct = 100.0 * static_cast<double>(s.matches) /
                        static_cast<double>(s.discriminative_pairs);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reward deltas

struct DeltaRecord {
  std::string example_id;
  double delta = 0.0;  // rule reward of chosen minus rule reward of rejected
};

struct Histogram {
  std::vector<double> edges;  // bins are [e_i, e_{i+1}); the last is closed
  std::vector<std::size_t> counts;
};

/// Uniform bin edges over [-1, 1].
inline std::vector<double> uniform_edges(std::size_t bins) {
  if (bins == 0) throw ArgumentError("bins must be >= 1");
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    edges[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(bins);
  return edges;
}

inline Histogram histogram(std::span<const double> values, std::vector<double> edges) {
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()))
    throw ArgumentError("histogram edges must be sorted with at least two entries");
  Histogram h{std::move(edges), {}};
  h.counts.assign(h.edges.size() - 1, 0);
  for (double v : values) {
    if (v < h.edges.front() || v > h.edges.back()) continue;
    auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
    std::size_t bin = static_cast<std::size_t>(it - h.edges.begin()) - 1;
    if (bin >= h.counts.size()) bin = h.counts.size() - 1;
    ++h.counts[bin];
  }
  return h;
}

struct DeltaReport {
  std::vector<DeltaRecord> records;
  Histogram histogram;
  double mean = 0.0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t zero = 0;
};

namespace detail {
inline double satisfied_fraction(std::span<const int> verdicts) {
  if (verdicts.empty()) throw ArgumentError("empty rule score vector");
  std::size_t yes = 0;
  for (int v : verdicts) yes += (v == 1);
  return static_cast<double>(yes) / static_cast<double>(verdicts.size());
}
}  // namespace detail

/// delta_i = r(chosen_i) - r(rejected_i), with missing verdicts counted
/// as unsatisfied (the verifier's fallback).
inline DeltaReport rule_score_deltas(std::span<const JudgedPair> pairs,
                                     std::vector<double> edges = uniform_edges(20)) {
  rule_count(pairs);
  DeltaReport report;
  std::vector<double> deltas;
  for (const auto& p : pairs) {
    const double d = detail::satisfied_fraction(p.chosen) -
                     detail::satisfied_fraction(p.rejected);
    report.records.push_back({p.example_id, d});
    deltas.push_back(d);
    report.mean += d;
    if (d > 0) {
      ++report.positive;
    } else if (d < 0) {
      ++report.negative;
    } else {
      ++report.zero;
    }
  }
  report.mean /= static_cast<double>(pairs.size());
  report.histogram = histogram(deltas, std::move(edges));
  return report;
}

/// Same as above from raw score vectors; both lists must align.
inline DeltaReport rule_score_deltas(std::span<const std::vector<int>> chosen,
                                     std::span<const std::vector<int>> rejected,
                                     std::vector<double> edges = uniform_edges(20)) {
  if (chosen.size() != rejected.size())
    throw ArgumentError("chosen and rejected score lists are misaligned");
  std::vector<JudgedPair> pairs;
  for (std::size_t i = 0; i < chosen.size(); ++i)
    pairs.push_back({std::to_string(i), chosen[i], rejected[i], true});
  return rule_score_deltas(pairs, std::move(edges));
}

// ---------------------------------------------------------------------------
// Cross-rule agreement

struct AgreementMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::optional<double>> cells;  // row-major, percent
  std::vector<std::size_t> support;          // co-discriminative pairs per cell

  const std::optional<double>& at(std::size_t i, std::size_t j) const {
    return cells.at(i * cols + j);
  }
};

inline json matrix_to_json(const AgreementMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols; ++j)
      row.push_back(m.at(i, j) ? json(*m.at(i, j)) : json(nullptr));
    rows.push_back(row);
  }
  return json{{"rows", m.rows}, {"cols", m.cols}, {"cells", rows},
              {"support", m.support}};
}

/// Row i, column j: empty cells for undefined entries.
inline std::string matrix_to_csv(const AgreementMatrix& m) {
  std::string out = "rule";
  for (std::size_t j = 0; j < m.cols; ++j) out += ",b" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < m.rows; ++i) {
    out += "a" + std::to_string(i);
    for (std::size_t j = 0; j < m.cols; ++j) {
      out += ',';
      if (const auto& c = m.at(i, j)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", *c);
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

/// Cell (i, j): over pairs where rule i of A and rule j of B both
/// discriminate, the percentage where they prefer the same side. Both
/// inputs must judge the same pairs in the same order.
inline AgreementMatrix agreement_matrix(std::span<const JudgedPair> a,
                                        std::span<const JudgedPair> b) {
  if (a.size() != b.size())
    throw ArgumentError("rule sets were judged on different pair lists");
  const std::size_t ka = rule_count(a);
  const std::size_t kb = rule_count(b);
  for (std::size_t p = 0; p < a.size(); ++p)
    if (a[p].example_id != b[p].example_id)
      throw ArgumentError("pair " + std::to_string(p) + " ids differ");
  AgreementMatrix m;
  m.rows = ka;
  m.cols = kb;
  m.cells.assign(ka * kb, std::nullopt);
  m.support.assign(ka * kb, 0);
  std::vector<std::size_t> same(ka * kb, 0);
  for (std::size_t p = 0; p < a.size(); ++p) {
    std::vector<std::optional<int>> pb(kb);
    for (std::size_t j = 0; j < kb; ++j) pb[j] = rule_preference(b[p], j);
    for (std::size_t i = 0; i < ka; ++i) {
      const auto pa = rule_preference(a[p], i);
      if (!pa || *pa == 0) continue;
      for (std::size_t j = 0; j < kb; ++j) {
        if (!pb[j] || *pb[j] == 0) continue;
        ++m.support[i * kb + j];
        same[i * kb + j] += (*pa == *pb[j]);
      }
    }
  }
  for (std::size_t c = 0; c < m.cells.size(); ++c)
    if (m.support[c] > 0)
      m.cells[c] = 100.0 * static_cast<double>(same[c]) /
                   static_cast<double>(m.support[c]);
  return m;
}

enum class RuleSide { kA, kB };

struct RankedRule {
  RuleSide side = RuleSide::kA;
  std::size_t index = 0;
  double max_agreement = 0.0;
};

struct UniqueSimilar {
  std::vector<RankedRule> unique;   // ascending max agreement
  std::vector<RankedRule> similar;  // descending max agreement
};

/// Ranks every rule of both sets by its maximum agreement with the other
/// set. Undefined cells are ignored; rules with no defined cell are left
/// out. Ties break by side, then index.
inline UniqueSimilar unique_similar_rules(const AgreementMatrix& m,
                                          std::size_t top_k = 6) {
  std::vector<RankedRule> all;
  auto collect = [&](RuleSide side, std::size_t n, std::size_t other, auto cell) {
    for (std::size_t i = 0; i < n; ++i) {
      std::optional<double> best;
      for (std::size_t j = 0; j < other; ++j)
        if (const auto& c = cell(i, j); c && (!best || *c > *best)) best = c;
      if (best) all.push_back({side, i, *best});
    }
  };
  collect(RuleSide::kA, m.rows, m.cols,
          [&](std::size_t i, std::size_t j) { return m.at(i, j); });
  collect(RuleSide::kB, m.cols, m.rows,
          [&](std::size_t i, std::size_t j) { return m.at(j, i); });

  auto key = [](const RankedRule& r) {
    return std::pair(static_cast<int>(r.side), r.index);
  };
  UniqueSimilar out;
  out.unique = all;
  std::stable_sort(out.unique.begin(), out.unique.end(),
                   [&](const RankedRule& x, const RankedRule& y) {
                     if (x.max_agreement != y.max_agreement)
                       return x.max_agreement < y.max_agreement;
                     return key(x) < key(y);
                   });
  out.similar = all;
  std::stable_sort(out.similar.begin(), out.similar.end(),
                   [&](const RankedRule& x, const RankedRule& y) {
                     if (x.max_agreement != y.max_agreement)
                       return x.max_agreement > y.max_agreement;
                     return key(x) < key(y);
                   });
  if (out.unique.size() > top_k) out.unique.resize(top_k);
  if (out.similar.size() > top_k) out.similar.resize(top_k);
  return out;
}

/// Synthetic judgments with planted satisfaction rates: each rule is
/// satisfied by the chosen response with probability p_chosen and by the
/// rejected one with probability p_rejected, independently.
inline std::vector<JudgedPair> planted_pairs(std::size_t rules, std::size_t pairs,
                                             double p_chosen, double p_rejected,
                                             std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "analytics.planted");
  std::vector<JudgedPair> out(pairs);
  for (std::size_t p = 0; p < pairs; ++p) {
    out[p].example_id = "pair-" + std::to_string(p);
    for (std::size_t k = 0; k < rules; ++k) {
      out[p].chosen.push_back(rng.bernoulli(p_chosen) ? 1 : 0);
      out[p].rejected.push_back(rng.bernoulli(p_rejected) ? 1 : 0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Win rate

inline std::string build_winrate_prompt(std::string_view instruction,
                                        std::string_view output_1,
                                        std::string_view output_2) {
  return prompts::fill_template(prompts::kWinRateRanking,
                                {{"instruction", std::string(instruction)},
                                 {"output_1", std::string(output_1)},
                                 {"output_2", std::string(output_2)}});
}

/// Slot (1 or 2) of the model ranked best in a judge reply, or nullopt.
/// Accepts any text containing model/rank entries in either key order,
/// with single or double quotes.
inline std::optional<int> parse_ranking(std::string_view response) {
  static const std::regex model_first(
      R"(['"]model['"]\s*:\s*['"]model_([12])['"]\s*,\s*['"]rank['"]\s*:\s*['"]?(\d+))");
  static const std::regex rank_first(
      R"(['"]rank['"]\s*:\s*['"]?(\d+)['"]?\s*,\s*['"]model['"]\s*:\s*['"]model_([12])['"])");
  std::optional<long> rank[3];
  const std::string text(response);
  for (std::sregex_iterator it(text.begin(), text.end(), model_first), end; it != end; ++it) {
    const int model = std::stoi((*it)[1]);
    if (!rank[model]) rank[model] = std::stol((*it)[2]);
  }
  for (std::sregex_iterator it(text.begin(), text.end(), rank_first), end; it != end; ++it) {
    const int model = std::stoi((*it)[2]);
    if (!rank[model]) rank[model] = std::stol((*it)[1]);
  }
  if (rank[1] && rank[2]) {
    if (*rank[1] == *rank[2]) return std::nullopt;
    return *rank[1] < *rank[2] ? 1 : 2;
  }
  if (rank[1] && *rank[1] == 1) return 1;
  if (rank[2] && *rank[2] == 1) return 2;
  return std::nullopt;
}

struct WinRateItem {
  std::string id;
  std::string instruction;
  std::string candidate;
  std::string reference;
};

struct WinRateRecord {
  std::string id;
  int candidate_slot = 1;
  std::optional<int> winner_slot;  // nullopt when excluded
  bool candidate_won = false;
  int attempts = 1;
  std::string raw_response;
};

inline void to_json(json& j, const WinRateRecord& r) {
  j = json{{"id", r.id},
           {"candidate_slot", r.candidate_slot},
           {"winner_slot", r.winner_slot ? json(*r.winner_slot) : json(nullptr)},
           {"candidate_won", r.candidate_won},
           {"excluded", !r.winner_slot.has_value()},
           {"attempts", r.attempts},
           {"raw_response", r.raw_response}};
}

struct WinRateOptions {
  SamplingParams sampling = defaults::kJudge;
  std::string model_id;
  std::size_t concurrency = 4;
};

struct WinRateReport {
  double win_rate = 0.0;
  std::size_t wins = 0;
  std::size_t judged = 0;
  std::size_t excluded = 0;
  std::vector<WinRateRecord> records;
};

/// Judges each candidate against its reference with the candidate placed in
/// slot 1 or 2 by a seeded coin. Replies that cannot be parsed after one
/// retry exclude the pair, and exclusions are counted rather than scored.
inline WinRateReport win_rate(std::span<const WinRateItem> items, Provider& judge,
                              std::uint64_t seed, const WinRateOptions& options = {}) {
  if (items.empty()) throw ArgumentError("no pairs to judge");
  Rng coin = Rng::substream(seed, "winrate.order");
  WinRateReport report;
  report.records.resize(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    report.records[i].id = items[i].id;
    report.records[i].candidate_slot = coin.bernoulli(0.5) ? 1 : 2;
  }
  parallel_for(items.size(), options.concurrency, [&](std::size_t i) {
    auto& rec = report.records[i];
    const auto& item = items[i];
    const std::string prompt =
        rec.candidate_slot == 1
            ? build_winrate_prompt(item.instruction, item.candidate, item.reference)
            : build_winrate_prompt(item.instruction, item.reference, item.candidate);
    for (int attempt = 0; attempt < 2; ++attempt) {
      rec.attempts = attempt + 1;
      try {
        rec.raw_response =
            judge.complete(options.sampling.request(prompt, options.model_id, attempt))
                .output;
      } catch (const std::exception& e) {
        rec.raw_response = std::string("error: ") + e.what();
        continue;
      }
      if ((rec.winner_slot = parse_ranking(rec.raw_response))) break;
    }
    if (rec.winner_slot) rec.candidate_won = *rec.winner_slot == rec.candidate_slot;
  });
  for (const auto& r : report.records) {
    if (!r.winner_slot) {
      ++report.excluded;
      continue;
    }
    ++report.judged;
    report.wins += r.candidate_won;
  }
  if (report.judged == 0) throw Error("every win-rate pair was excluded");
  report.win_rate =
      static_cast<double>(report.wins) / static_cast<double>(report.judged);
  return report;
}

}  // namespace rulekit

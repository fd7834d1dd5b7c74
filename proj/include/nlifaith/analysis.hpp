// Copyright 2026 The nlifaith Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlifaith/evaluation_stats.hpp"
#include "nlifaith/instance.hpp"
#include "nlifaith/nli_scoring.hpp"

namespace nlifaith::analysis {

// ---------------------------------------------------------------------------
// First-person pronoun proxy

// Returns true if the text contains a first-person singular pronoun.
using PronounTagger = std::function<bool(std::string_view)>;

// 1 iff `text` contains the standalone token "i" (any case). Tokens are
// maximal runs of letters and digits, so "i," and "I'm" count and "It"
// does not. A tagger, when given, replaces the rule.
int pronoun_indicator(std::string_view text);
int pronoun_indicator(std::string_view text, const PronounTagger& tagger);

// ---------------------------------------------------------------------------
// Kendall tau-b

struct CorrelationResult {
  std::string var_x;
  std::string var_y;
  double tau = 0.0;
  std::size_t n = 0;
  // Two-sided, normal approximation with tie-corrected variance.
  std::optional<double> p_value;
};

// tau_b = (C - D) / sqrt((C + D + Tx) (C + D + Ty)) with Tx / Ty the pairs
// tied only in x / only in y. O(n log n). Throws UndefinedCorrelationError
// when either variable is constant, UsageError on fewer than 2 points or
// unequal lengths.
CorrelationResult kendall_tau_b(std::span<const double> x, std::span<const double> y,
                                std::string var_x = "x", std::string var_y = "y");

// ---------------------------------------------------------------------------
// Proxy correlation table: rows are metrics plus "Gold Label", columns are
// corpora; each cell is tau_b(pronoun indicator, row variable) on that
// corpus. Cells that are undefined carry the error text instead.

struct ProxyCell {
  std::optional<CorrelationResult> result;
  std::string error;
};

struct ProxyTable {
  std::vector<std::string> rows;
  std::vector<std::string> corpora;
  std::vector<std::vector<ProxyCell>> cells;  // [row][corpus]

  std::string to_csv() const;
};

inline constexpr std::string_view kGoldLabelRow = "Gold Label";

// `scores` must be aligned to `instances` by uid (same uids, any order).
ProxyTable proxy_correlation_report(std::span<const io::FaithfulnessInstance> instances,
                                    const stats::ScoreTable& scores,
                                    std::span<const std::string> metrics,
                                    const PronounTagger& tagger = {});

// ---------------------------------------------------------------------------
// Score histograms

inline constexpr int kDefaultHistogramBins = 20;

struct HistogramData {
  std::vector<double> bin_edges;
  std::vector<std::size_t> counts_faithful;
  std::vector<std::size_t> counts_unfaithful;
  scoring::ScoreMode mode = scoring::ScoreMode::kEntailmentOnly;

  // bin_low,bin_high,faithful_count,unfaithful_count
  std::string to_csv() const;
  std::string to_svg(std::string_view title = {}) const;
};

// Fixed-width bins over [0, 1] for entailment scores or [-1, 1] for e-c.
// The top edge belongs to the last bin. Throws UsageError on empty input
// or scores outside the mode's range.
HistogramData score_histogram(std::span<const double> scores, std::span<const int> labels,
                              scoring::ScoreMode mode, int bins = kDefaultHistogramBins);

// ---------------------------------------------------------------------------
// BEGIN generator bias

// Correlations on a corpus with generator ids:
//   GPT-2 (1) vs T5 (0) indicator against the pronoun indicator,
//   the same indicator against faithfulness,
//   and against faithfulness on instances without a pronoun;
// and, when CTRL-dialog outputs are present, a CTRL indicator against
// faithfulness and against the pronoun indicator over all instances.
// Throws UnsupportedCorpusError if any instance lacks a generator id or no
// GPT-2 / T5 outputs are present.
std::vector<CorrelationResult> begin_bias_report(
    std::span<const io::FaithfulnessInstance> instances, const PronounTagger& tagger = {});

// ---------------------------------------------------------------------------
// Cost accounting

struct CorpusSummary {
  std::size_t instances = 0;
  double input_sentences = 0.0;   // mean per instance
  double output_sentences = 0.0;  // mean per instance
  double questions = 0.0;         // mean #Q per instance
  double question_length = 0.0;   // mean Ql, in tokens
};

struct CostRow {
  std::string metric;
  std::string parameters_millions;  // as reported, e.g. "220 + 355 + 355"
  std::string calls_expression;
  double calls_per_instance = 0.0;
  double estimated_calls = 0.0;
  std::optional<std::uint64_t> measured_calls;
};

struct CostReport {
  std::vector<CostRow> rows;
  std::string convention;

  std::string to_csv() const;
  std::string to_markdown() const;
};

// `measured_mc` / `measured_no_mc` are backend counter deltas of actual runs
// with and without MC dropout, when available.
CostReport cost_report(const scoring::MetricConfig& cfg, const CorpusSummary& corpus,
                       std::optional<std::uint64_t> measured_mc = std::nullopt,
                       std::optional<std::uint64_t> measured_no_mc = std::nullopt);

// Naive sentence count: runs ending in '.', '!' or '?' (at least 1 for
// nonempty text).
std::size_t count_sentences(std::string_view text);

}  // namespace nlifaith::analysis

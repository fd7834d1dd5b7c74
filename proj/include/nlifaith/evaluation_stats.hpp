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

// Evaluation statistics: ROC-AUC, stratified bootstrap intervals, the paired
// approximate randomization test, macro averages, ablation deltas and score
// ensembles.
//
// Labels are 0/1 with 1 = faithful (the positive class). All resampling is
// driven by CounterRng streams indexed by iteration, so results depend only
// on the seed, never on scheduling.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlifaith/data_io.hpp"

namespace nlifaith::stats {

inline constexpr int kDefaultBootstrapSamples = 1000;
inline constexpr int kDefaultPermutations = 10000;
inline constexpr double kDefaultAlpha = 0.05;

// Mann-Whitney AUC: over all (positive, negative) pairs, 1 when the
// positive scores higher, 0.5 on ties. Throws DegenerateInputError when a
// class is missing, UsageError on length mismatch or non-binary labels.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

// Linear-interpolation percentile of `values` (q in [0, 1]).
double percentile(std::vector<double> values, double q);

// Percentile interval [alpha/2, 1 - alpha/2] of B AUCs computed on
// resamples that draw positives and negatives separately, with
// replacement, keeping both class counts fixed.
Interval bootstrap_ci(std::span<const double> scores, std::span<const int> labels,
                      int B = kDefaultBootstrapSamples, double alpha = kDefaultAlpha,
                      std::uint64_t seed = 0);

// The B resampled AUCs behind bootstrap_ci, in iteration order.
std::vector<double> bootstrap_aucs(std::span<const double> scores, std::span<const int> labels,
                                   int B, std::uint64_t seed);

struct PairedCorpusScores {
  std::string corpus_id;
  std::vector<double> variant;
  std::vector<double> base;
  std::vector<int> labels;
};

struct SignificanceResult {
  std::string metric_a;
  std::string metric_b;
  std::string corpus_id;
  double observed_diff = 0.0;  // auc(a) - auc(b)
  double p_value = 1.0;
  int permutations = 0;
};

// One-sided paired approximate randomization test of auc(a) > auc(b). Each
// of R permutations swaps a_i and b_i with probability 1/2 per instance;
// p = (#{permuted diff >= observed} + 1) / (R + 1).
SignificanceResult paired_randomization_test(std::span<const double> scores_a,
                                             std::span<const double> scores_b,
                                             std::span<const int> labels,
                                             int R = kDefaultPermutations,
                                             std::uint64_t seed = 0);

// The same test on the macro average: the statistic is the mean over
// corpora of auc(variant) - auc(base), with swaps drawn independently per
// corpus. `variant` plays the role of a.
SignificanceResult paired_randomization_test_macro(std::span<const PairedCorpusScores> corpora,
                                                   int R = kDefaultPermutations,
                                                   std::uint64_t seed = 0);

struct CorpusAuc {
  std::string corpus_id;
  double auc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
};

struct EvalReport {
  std::vector<CorpusAuc> per_corpus;
  CorpusAuc macro_avg;
};

struct CorpusScores {
  std::string corpus_id;
  std::vector<double> scores;
  std::vector<int> labels;
};

// Per-corpus AUC with bootstrap CI plus the unweighted macro average. The
// macro CI takes, for each bootstrap iteration, the mean of the corpora's
// resampled AUCs (corpora resampled independently). Intervals are widened
// to include their point estimate when the percentile interval misses it.
EvalReport evaluate(std::span<const CorpusScores> corpora, int B = kDefaultBootstrapSamples,
                    double alpha = kDefaultAlpha, std::uint64_t seed = 0);

// Unweighted mean of per-corpus AUCs.
double macro_average(std::span<const double> aucs);

struct AblationDiff {
  std::string corpus_id;
  double delta_auc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// delta = auc(variant) - auc(base); the CI resamples instances jointly
// (stratified by class) and recomputes both AUCs on every resample.
AblationDiff ablation_diff(std::span<const double> scores_variant,
                           std::span<const double> scores_base, std::span<const int> labels,
                           int B = kDefaultBootstrapSamples, std::uint64_t seed = 0,
                           double alpha = kDefaultAlpha, std::string corpus_id = {});

// ablation_diff per corpus plus an "avg" row: the mean delta, with a CI
// from the mean of the corpora's paired-bootstrap deltas per iteration.
std::vector<AblationDiff> ablation_report(std::span<const PairedCorpusScores> corpora,
                                          int B = kDefaultBootstrapSamples,
                                          double alpha = kDefaultAlpha, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Score tables and ensembles

// Score columns aligned on uid. columns[m][i] is metric m on instance i.
struct ScoreTable {
  std::vector<std::string> uids;
  std::vector<std::string> corpora;
  std::vector<std::string> metrics;
  std::vector<std::vector<double>> columns;

  const std::vector<double>& column(std::string_view metric) const;
};

// Pivots uid,corpus,metric,score rows. Every metric must cover the same
// uids; otherwise AlignmentError lists the missing (metric, uid) pairs.
ScoreTable align_scores(std::span<const io::ScoreRow> rows);

enum class EnsembleRule {
  kMinMaxMean,  // per-corpus min-max scaling to [0,1], then mean
  kRankMean,    // per-corpus normalized average ranks, then mean
  kMean,        // raw mean
};

std::string_view to_string(EnsembleRule rule);
EnsembleRule parse_ensemble_rule(std::string_view text);

// Combines the named metrics of `table` per instance. A constant column
// within a corpus scales to 0.5 under kMinMaxMean.
std::vector<double> ensemble_scores(const ScoreTable& table,
                                    std::span<const std::string> metrics,
                                    EnsembleRule rule = EnsembleRule::kMinMaxMean);

}  // namespace nlifaith::stats

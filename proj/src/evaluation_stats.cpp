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

#include "nlifaith/evaluation_stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "nlifaith/errors.hpp"
#include "nlifaith/random.hpp"

namespace nlifaith::stats {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw UsageError("scores and labels differ in length (" + std::to_string(scores.size()) +
                     " vs " + std::to_string(labels.size()) + ")");
  }
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw UsageError("label at index " + std::to_string(i) + " is not 0/1");
    if (std::isnan(scores[i]))
      throw UsageError("score at index " + std::to_string(i) + " is NaN");
    pos += static_cast<std::size_t>(labels[i]);
  }
  if (pos == 0 || pos == labels.size()) {
    throw DegenerateInputError("AUC undefined: input has only " +
                               std::string(pos == 0 ? "negative" : "positive") + " labels");
  }
}

// Scores grouped by value. group_of[i] is the rank of instance i's score
// among the distinct values (ascending).
struct Ranked {
  std::vector<std::uint32_t> group_of;
  std::size_t groups = 0;
  std::vector<std::uint32_t> positives;  // instance indices with label 1
  std::vector<std::uint32_t> negatives;

  Ranked(std::span<const double> scores, std::span<const int> labels) {
    const std::size_t n = scores.size();
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(),
              [&](std::uint32_t a, std::uint32_t b) { return scores[a] < scores[b]; });
    group_of.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
      if (k > 0 && scores[order[k]] != scores[order[k - 1]]) ++groups;
      group_of[order[k]] = static_cast<std::uint32_t>(groups);
    }
    groups = n ? groups + 1 : 0;
    for (std::uint32_t i = 0; i < n; ++i)
      (labels[i] ? positives : negatives).push_back(i);
  }
};

// Twice the Mann-Whitney U statistic from per-group class counts:
// 2 * (#concordant) + (#tied) summed over groups in ascending order.
std::uint64_t twice_u(const std::vector<std::uint64_t>& pos, const std::vector<std::uint64_t>& neg) {
  std::uint64_t below = 0;
  std::uint64_t acc = 0;
  for (std::size_t g = 0; g < pos.size(); ++g) {
    acc += pos[g] * (2 * below + neg[g]);
    below += neg[g];
  }
  return acc;
}

double auc_from(std::uint64_t twice_u_value, std::uint64_t n_pos, std::uint64_t n_neg) {
  return static_cast<double>(twice_u_value) / (2.0 * static_cast<double>(n_pos) *
                                               static_cast<double>(n_neg));
}

// Draws one stratified resample into per-group counts for `ranked`.
// `rng` is consumed identically for every Ranked built over the same
// labels, which is what makes paired resampling possible.
void draw_resample(CounterRng& rng, const Ranked& ranked, std::vector<std::uint32_t>& picks) {
  picks.clear();
  const auto np = ranked.positives.size();
  const auto nn = ranked.negatives.size();
  for (std::size_t j = 0; j < np; ++j) picks.push_back(ranked.positives[rng.below(np)]);
  for (std::size_t j = 0; j < nn; ++j) picks.push_back(ranked.negatives[rng.below(nn)]);
}

double resampled_auc(const Ranked& ranked, const std::vector<std::uint32_t>& picks,
                     std::vector<std::uint64_t>& pos, std::vector<std::uint64_t>& neg) {
  pos.assign(ranked.groups, 0);
  neg.assign(ranked.groups, 0);
  const auto np = ranked.positives.size();
  for (std::size_t j = 0; j < picks.size(); ++j) {
    const auto g = ranked.group_of[picks[j]];
    (j < np ? pos : neg)[g] += 1;
  }
  return auc_from(twice_u(pos, neg), np, ranked.negatives.size());
}

double sorted_percentile(const std::vector<double>& sorted, double q) {
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Interval percentile_interval(std::vector<double> values, double alpha) {
  std::sort(values.begin(), values.end());
  return {sorted_percentile(values, alpha / 2.0), sorted_percentile(values, 1.0 - alpha / 2.0)};
}

void check_bootstrap_args(int B, double alpha) {
  if (B < 1) throw UsageError("bootstrap needs B >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const Ranked ranked(scores, labels);
  std::vector<std::uint64_t> pos(ranked.groups, 0), neg(ranked.groups, 0);
  for (auto i : ranked.positives) ++pos[ranked.group_of[i]];
  for (auto i : ranked.negatives) ++neg[ranked.group_of[i]];
  return auc_from(twice_u(pos, neg), ranked.positives.size(), ranked.negatives.size());
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw UsageError("percentile of an empty list");
  if (!(q >= 0.0 && q <= 1.0)) throw UsageError("percentile q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  return sorted_percentile(values, q);
}

std::vector<double> bootstrap_aucs(std::span<const double> scores, std::span<const int> labels,
                                   int B, std::uint64_t seed) {
  check_inputs(scores, labels);
  if (B < 1) throw UsageError("bootstrap needs B >= 1");
  const Ranked ranked(scores, labels);
  std::vector<double> out(static_cast<std::size_t>(B));
  std::vector<std::uint32_t> picks;
  std::vector<std::uint64_t> pos, neg;
  for (int b = 0; b < B; ++b) {
    CounterRng rng(seed, static_cast<std::uint64_t>(b));
    draw_resample(rng, ranked, picks);
    out[static_cast<std::size_t>(b)] = resampled_auc(ranked, picks, pos, neg);
  }
  return out;
}

Interval bootstrap_ci(std::span<const double> scores, std::span<const int> labels, int B,
                      double alpha, std::uint64_t seed) {
  check_bootstrap_args(B, alpha);
  return percentile_interval(bootstrap_aucs(scores, labels, B, seed), alpha);
}

namespace {

// Pools both systems' scores and sorts once. A permutation only decides,
// per instance, which pooled entry belongs to which system, so every
// permuted statistic is one linear sweep.
class PairedSweep {
 public:
  PairedSweep(std::span<const double> a, std::span<const double> b, std::span<const int> labels)
      : labels_(labels.begin(), labels.end()), swap_words_((a.size() + 63) / 64, 0) {
    if (a.size() != b.size())
      throw UsageError("paired test: score lists differ in length (" + std::to_string(a.size()) +
                       " vs " + std::to_string(b.size()) + ")");
    check_inputs(a, labels);
    check_inputs(b, labels);
    const std::size_t n = a.size();
    pooled_.reserve(2 * n);
    for (std::uint32_t i = 0; i < n; ++i) {
      pooled_.push_back({a[i], i, 0});
      pooled_.push_back({b[i], i, 1});
    }
    std::sort(pooled_.begin(), pooled_.end(),
              [](const Entry& x, const Entry& y) { return x.value < y.value; });
    for (std::size_t k = 1; k <= pooled_.size(); ++k)
      if (k == pooled_.size() || pooled_[k].value != pooled_[k - 1].value) group_end_.push_back(k);
    for (int l : labels) n_pos_ += static_cast<std::uint64_t>(l);
    n_neg_ = n - n_pos_;
  }

  // Numerator of auc(a') - auc(b') over the shared denominator 2 * P * N.
  std::int64_t numerator() const {
    std::uint64_t below[2] = {0, 0};
    std::uint64_t acc[2] = {0, 0};
    std::size_t start = 0;
    for (std::size_t end : group_end_) {
      std::uint64_t pos[2] = {0, 0};
      std::uint64_t neg[2] = {0, 0};
      for (std::size_t k = start; k < end; ++k) {
        const auto& e = pooled_[k];
        const unsigned swapped = (swap_words_[e.instance >> 6] >> (e.instance & 63)) & 1u;
        const unsigned side = e.from_b ^ swapped;
        (labels_[e.instance] ? pos : neg)[side] += 1;
      }
      for (int s = 0; s < 2; ++s) {
        acc[s] += pos[s] * (2 * below[s] + neg[s]);
        below[s] += neg[s];
      }
      start = end;
    }
    return static_cast<std::int64_t>(acc[0]) - static_cast<std::int64_t>(acc[1]);
  }

  double diff() const {
    return static_cast<double>(numerator()) /
           (2.0 * static_cast<double>(n_pos_) * static_cast<double>(n_neg_));
  }

  void clear_swaps() { std::fill(swap_words_.begin(), swap_words_.end(), 0); }
  void draw_swaps(CounterRng& rng) {
    for (auto& w : swap_words_) w = rng();
  }

 private:
  struct Entry {
    double value;
    std::uint32_t instance;
    std::uint8_t from_b;
  };
  std::vector<int> labels_;
  std::vector<Entry> pooled_;
  std::vector<std::size_t> group_end_;
  std::vector<std::uint64_t> swap_words_;
  std::uint64_t n_pos_ = 0;
  std::uint64_t n_neg_ = 0;
};

}  // namespace

SignificanceResult paired_randomization_test(std::span<const double> scores_a,
                                             std::span<const double> scores_b,
                                             std::span<const int> labels, int R,
                                             std::uint64_t seed) {
  if (R < 1) throw UsageError("paired test needs R >= 1");
  PairedSweep sweep(scores_a, scores_b, labels);
  const std::int64_t observed = sweep.numerator();
  std::int64_t at_least = 0;
  for (int r = 0; r < R; ++r) {
    CounterRng rng(seed, static_cast<std::uint64_t>(r));
    sweep.draw_swaps(rng);
    if (sweep.numerator() >= observed) ++at_least;
  }
  sweep.clear_swaps();
  SignificanceResult res;
  res.observed_diff = sweep.diff();
  res.p_value = static_cast<double>(at_least + 1) / static_cast<double>(R + 1);
  res.permutations = R;
  return res;
}

SignificanceResult paired_randomization_test_macro(std::span<const PairedCorpusScores> corpora,
                                                   int R, std::uint64_t seed) {
  if (R < 1) throw UsageError("paired test needs R >= 1");
  if (corpora.empty()) throw UsageError("paired test: no corpora");
  std::vector<PairedSweep> sweeps;
  std::vector<std::uint64_t> streams;
  for (const auto& c : corpora) {
    sweeps.emplace_back(c.variant, c.base, c.labels);
    streams.push_back(hash_combine(seed, hash_string(c.corpus_id)));
  }
  auto mean_diff = [&] {
    double sum = 0.0;
    for (const auto& s : sweeps) sum += s.diff();
    return sum / static_cast<double>(sweeps.size());
  };
  const double observed = mean_diff();
  std::int64_t at_least = 0;
  for (int r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < sweeps.size(); ++c) {
      CounterRng rng(streams[c], static_cast<std::uint64_t>(r));
      sweeps[c].draw_swaps(rng);
    }
    if (mean_diff() >= observed) ++at_least;
  }
  SignificanceResult res;
  res.corpus_id = "avg";
  res.observed_diff = observed;
  res.p_value = static_cast<double>(at_least + 1) / static_cast<double>(R + 1);
  res.permutations = R;
  return res;
}

double macro_average(std::span<const double> aucs) {
  if (aucs.empty()) throw UsageError("macro average needs at least one corpus");
  return std::accumulate(aucs.begin(), aucs.end(), 0.0) / static_cast<double>(aucs.size());
}

EvalReport evaluate(std::span<const CorpusScores> corpora, int B, double alpha,
                    std::uint64_t seed) {
  check_bootstrap_args(B, alpha);
  if (corpora.empty()) throw UsageError("evaluate: no corpora");
  EvalReport report;
  std::vector<double> macro_boot(static_cast<std::size_t>(B), 0.0);
  std::vector<double> point;
  for (const auto& c : corpora) {
    CorpusAuc row;
    row.corpus_id = c.corpus_id;
    row.n = c.scores.size();
    row.auc = roc_auc(c.scores, c.labels);
    const auto boot = bootstrap_aucs(c.scores, c.labels, B, hash_combine(seed, hash_string(c.corpus_id)));
    const auto ci = percentile_interval(boot, alpha);
    row.ci_low = std::min(ci.low, row.auc);
    row.ci_high = std::max(ci.high, row.auc);
    for (std::size_t b = 0; b < boot.size(); ++b) macro_boot[b] += boot[b];
    point.push_back(row.auc);
    report.per_corpus.push_back(std::move(row));
  }
  for (auto& v : macro_boot) v /= static_cast<double>(corpora.size());
  auto& macro = report.macro_avg;
  macro.corpus_id = "avg";
  macro.auc = macro_average(point);
  for (const auto& c : report.per_corpus) macro.n += c.n;
  const auto ci = percentile_interval(std::move(macro_boot), alpha);
  macro.ci_low = std::min(ci.low, macro.auc);
  macro.ci_high = std::max(ci.high, macro.auc);
  return report;
}

namespace {

std::vector<double> paired_deltas(std::span<const double> variant, std::span<const double> base,
                                  std::span<const int> labels, int B, std::uint64_t seed) {
  const Ranked rv(variant, labels);
  const Ranked rb(base, labels);
  std::vector<double> deltas(static_cast<std::size_t>(B));
  std::vector<std::uint32_t> picks;
  std::vector<std::uint64_t> pos, neg;
  for (int b = 0; b < B; ++b) {
    CounterRng rng(seed, static_cast<std::uint64_t>(b));
    draw_resample(rng, rv, picks);  // rv and rb share class membership
    deltas[static_cast<std::size_t>(b)] =
        resampled_auc(rv, picks, pos, neg) - resampled_auc(rb, picks, pos, neg);
  }
  return deltas;
}

}  // namespace

AblationDiff ablation_diff(std::span<const double> scores_variant,
                           std::span<const double> scores_base, std::span<const int> labels,
                           int B, std::uint64_t seed, double alpha, std::string corpus_id) {
  if (scores_variant.size() != scores_base.size())
    throw UsageError("ablation: score lists differ in length");
  check_bootstrap_args(B, alpha);
  AblationDiff out;
  out.corpus_id = std::move(corpus_id);
  out.delta_auc = roc_auc(scores_variant, labels) - roc_auc(scores_base, labels);
  const auto ci =
      percentile_interval(paired_deltas(scores_variant, scores_base, labels, B, seed), alpha);
  out.ci_low = std::min(ci.low, out.delta_auc);
  out.ci_high = std::max(ci.high, out.delta_auc);
  return out;
}

std::vector<AblationDiff> ablation_report(std::span<const PairedCorpusScores> corpora, int B,
                                          double alpha, std::uint64_t seed) {
  check_bootstrap_args(B, alpha);
  if (corpora.empty()) throw UsageError("ablation_report: no corpora");
  std::vector<AblationDiff> out;
  std::vector<double> avg_boot(static_cast<std::size_t>(B), 0.0);
  double avg = 0.0;
  for (const auto& c : corpora) {
    if (c.variant.size() != c.base.size())
      throw UsageError("ablation: score lists differ in length for " + c.corpus_id);
    AblationDiff d;
    d.corpus_id = c.corpus_id;
    d.delta_auc = roc_auc(c.variant, c.labels) - roc_auc(c.base, c.labels);
    const auto boot = paired_deltas(c.variant, c.base, c.labels, B,
                                    hash_combine(seed, hash_string(c.corpus_id)));
    for (std::size_t b = 0; b < boot.size(); ++b) avg_boot[b] += boot[b];
    const auto ci = percentile_interval(boot, alpha);
    d.ci_low = std::min(ci.low, d.delta_auc);
    d.ci_high = std::max(ci.high, d.delta_auc);
    avg += d.delta_auc;
    out.push_back(std::move(d));
  }
  const double n = static_cast<double>(corpora.size());
  for (auto& v : avg_boot) v /= n;
  AblationDiff a;
  a.corpus_id = "avg";
  a.delta_auc = avg / n;
  const auto ci = percentile_interval(std::move(avg_boot), alpha);
  a.ci_low = std::min(ci.low, a.delta_auc);
  a.ci_high = std::max(ci.high, a.delta_auc);
  out.push_back(std::move(a));
  return out;
}

// ---------------------------------------------------------------------------

const std::vector<double>& ScoreTable::column(std::string_view metric) const {
  for (std::size_t m = 0; m < metrics.size(); ++m)
    if (metrics[m] == metric) return columns[m];
  throw UsageError("no scores for metric '" + std::string(metric) + "'");
}

ScoreTable align_scores(std::span<const io::ScoreRow> rows) {
  if (rows.empty()) throw UsageError("no score rows");
  ScoreTable table;
  std::map<std::string, std::size_t> uid_index;
  std::map<std::string, std::size_t> metric_index;
  for (const auto& r : rows) {
    if (uid_index.emplace(r.uid, table.uids.size()).second) {
      table.uids.push_back(r.uid);
      table.corpora.push_back(r.corpus);
    } else if (table.corpora[uid_index[r.uid]] != r.corpus) {
      throw AlignmentError("uid " + r.uid + " appears under corpora " +
                           table.corpora[uid_index[r.uid]] + " and " + r.corpus);
    }
    if (metric_index.emplace(r.metric, table.metrics.size()).second)
      table.metrics.push_back(r.metric);
  }
  const double nan = std::nan("");
  table.columns.assign(table.metrics.size(), std::vector<double>(table.uids.size(), nan));
  std::vector<std::vector<bool>> seen(table.metrics.size(),
                                      std::vector<bool>(table.uids.size(), false));
  for (const auto& r : rows) {
    const auto m = metric_index[r.metric];
    const auto u = uid_index[r.uid];
    if (seen[m][u]) throw AlignmentError("duplicate score for uid " + r.uid + ", metric " + r.metric);
    seen[m][u] = true;
    table.columns[m][u] = r.score;
  }
  std::string missing;
  std::size_t n_missing = 0;
  for (std::size_t m = 0; m < table.metrics.size(); ++m) {
    for (std::size_t u = 0; u < table.uids.size(); ++u) {
      if (seen[m][u]) continue;
      if (n_missing < 20) missing += "\n  " + table.metrics[m] + ": " + table.uids[u];
      ++n_missing;
    }
  }
  if (n_missing) {
    throw AlignmentError("score files are not aligned; " + std::to_string(n_missing) +
                         " missing (metric, uid) pairs:" + missing +
                         (n_missing > 20 ? "\n  ..." : ""));
  }
  return table;
}

std::string_view to_string(EnsembleRule rule) {
  switch (rule) {
    case EnsembleRule::kMinMaxMean:
      return "minmax-mean";
    case EnsembleRule::kRankMean:
      return "rank-mean";
    case EnsembleRule::kMean:
      return "mean";
  }
  return "minmax-mean";
}

EnsembleRule parse_ensemble_rule(std::string_view text) {
  if (text == "minmax-mean") return EnsembleRule::kMinMaxMean;
  if (text == "rank-mean") return EnsembleRule::kRankMean;
  if (text == "mean") return EnsembleRule::kMean;
  throw UsageError("unknown ensemble rule '" + std::string(text) + "'");
}

std::vector<double> ensemble_scores(const ScoreTable& table, std::span<const std::string> metrics,
                                    EnsembleRule rule) {
  if (metrics.size() < 2) throw UsageError("an ensemble needs at least two metrics");
  const std::size_t n = table.uids.size();
  std::map<std::string, std::vector<std::size_t>> by_corpus;
  for (std::size_t i = 0; i < n; ++i) by_corpus[table.corpora[i]].push_back(i);

  std::vector<double> out(n, 0.0);
  for (const auto& name : metrics) {
    const auto& col = table.column(name);
    std::vector<double> norm(col);
    if (rule == EnsembleRule::kMinMaxMean) {
      for (const auto& [corpus, idx] : by_corpus) {
        double lo = col[idx[0]], hi = col[idx[0]];
        for (auto i : idx) {
          lo = std::min(lo, col[i]);
          hi = std::max(hi, col[i]);
        }
        for (auto i : idx) norm[i] = hi > lo ? (col[i] - lo) / (hi - lo) : 0.5;
      }
    } else if (rule == EnsembleRule::kRankMean) {
      for (const auto& [corpus, idx] : by_corpus) {
        std::vector<std::size_t> order(idx);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return col[a] < col[b]; });
        const double denom = order.size() > 1 ? static_cast<double>(order.size() - 1) : 1.0;
        for (std::size_t k = 0; k < order.size();) {
          std::size_t e = k;
          while (e < order.size() && col[order[e]] == col[order[k]]) ++e;
          const double avg_rank = (static_cast<double>(k) + static_cast<double>(e - 1)) / 2.0;
          for (std::size_t t = k; t < e; ++t)
            norm[order[t]] = order.size() > 1 ? avg_rank / denom : 0.5;
          k = e;
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) out[i] += norm[i];
  }
  for (auto& v : out) v /= static_cast<double>(metrics.size());
  return out;
}

}  // namespace nlifaith::stats

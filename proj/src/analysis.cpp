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

#include "nlifaith/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "nlifaith/csv.hpp"
#include "nlifaith/errors.hpp"

namespace nlifaith::analysis {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string normalize_model(std::string_view id) {
  std::string out;
  for (char c : id) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

}  // namespace

int pronoun_indicator(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (i - start == 1 && (text[start] == 'i' || text[start] == 'I')) return 1;
  }
  return 0;
}

int pronoun_indicator(std::string_view text, const PronounTagger& tagger) {
  if (tagger) return tagger(text) ? 1 : 0;
  return pronoun_indicator(text);
}

// ---------------------------------------------------------------------------

CorrelationResult kendall_tau_b(std::span<const double> x, std::span<const double> y,
                                std::string var_x, std::string var_y) {
  if (x.size() != y.size())
    throw UsageError("kendall_tau_b: lengths differ (" + std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()) + ")");
  const std::size_t n = x.size();
  if (n < 2) throw UndefinedCorrelationError("kendall_tau_b needs at least 2 points");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  auto pairs_of = [](std::uint64_t t) { return t * (t - 1) / 2; };
  // Tie groups: t(t-1)/2 and the two extra sums the variance needs.
  struct TieSums {
    std::uint64_t pairs = 0;
    double v1 = 0.0;  // sum t(t-1)(2t+5)
    double v2 = 0.0;  // sum t(t-1)
    double v3 = 0.0;  // sum t(t-1)(t-2)
    void add(std::uint64_t t) {
      const double d = static_cast<double>(t);
      pairs += t * (t - 1) / 2;
      v1 += d * (d - 1) * (2 * d + 5);
      v2 += d * (d - 1);
      v3 += d * (d - 1) * (d - 2);
    }
  };

  TieSums xt;
  std::uint64_t joint = 0;
  for (std::size_t k = 0, xs = 0, js = 0; k <= n; ++k) {
    if (k == n || x[order[k]] != x[order[xs]]) {
      xt.add(k - xs);
      xs = k;
    }
    if (k == n || x[order[k]] != x[order[js]] || y[order[k]] != y[order[js]]) {
      joint += pairs_of(k - js);
      js = k;
    }
  }

  // Merge sort on y counts discordant pairs (strict inversions).
  std::vector<double> ys(n), buf(n);
  for (std::size_t k = 0; k < n; ++k) ys[k] = y[order[k]];
  std::uint64_t discordant = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n);
      const std::size_t hi = std::min(lo + 2 * width, n);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (ys[j] < ys[i]) {
          discordant += mid - i;
          buf[k++] = ys[j++];
        } else {
          buf[k++] = ys[i++];
        }
      }
      while (i < mid) buf[k++] = ys[i++];
      while (j < hi) buf[k++] = ys[j++];
    }
    std::swap(ys, buf);
  }

  TieSums yt;
  for (std::size_t k = 0, s = 0; k <= n; ++k) {
    if (k == n || ys[k] != ys[s]) {
      yt.add(k - s);
      s = k;
    }
  }

  const std::uint64_t total = pairs_of(n);
  const std::uint64_t not_tied_y = total - yt.pairs;  // C + D + Tx
  const std::uint64_t not_tied_x = total - xt.pairs;  // C + D + Ty
  if (not_tied_x == 0 || not_tied_y == 0) {
    throw UndefinedCorrelationError("tau-b undefined: " +
                                    (not_tied_x == 0 ? var_x : var_y) + " is constant");
  }
  const std::int64_t c_minus_d = static_cast<std::int64_t>(not_tied_x + not_tied_y) -
                                 static_cast<std::int64_t>(total - joint) -
                                 2 * static_cast<std::int64_t>(discordant);

  CorrelationResult res;
  res.var_x = std::move(var_x);
  res.var_y = std::move(var_y);
  res.n = n;
  res.tau = static_cast<double>(c_minus_d) /
            std::sqrt(static_cast<double>(not_tied_y) * static_cast<double>(not_tied_x));

  const double nd = static_cast<double>(n);
  double var_s = (nd * (nd - 1) * (2 * nd + 5) - xt.v1 - yt.v1) / 18.0 +
                 xt.v2 * yt.v2 / (2.0 * nd * (nd - 1));
  if (n > 2) var_s += xt.v3 * yt.v3 / (9.0 * nd * (nd - 1) * (nd - 2));
  if (var_s > 0.0) {
    const double z = static_cast<double>(c_minus_d) / std::sqrt(var_s);
    res.p_value = std::erfc(std::abs(z) / std::sqrt(2.0));
  }
  return res;
}

// ---------------------------------------------------------------------------

ProxyTable proxy_correlation_report(std::span<const io::FaithfulnessInstance> instances,
                                    const stats::ScoreTable& scores,
                                    std::span<const std::string> metrics,
                                    const PronounTagger& tagger) {
  std::map<std::string, std::size_t> row_of_uid;
  for (std::size_t i = 0; i < scores.uids.size(); ++i) row_of_uid[scores.uids[i]] = i;

  ProxyTable table;
  table.rows.assign(metrics.begin(), metrics.end());
  table.rows.emplace_back(kGoldLabelRow);

  std::map<std::string, std::vector<std::size_t>> by_corpus;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!by_corpus.count(instances[i].corpus_id)) table.corpora.push_back(instances[i].corpus_id);
    by_corpus[instances[i].corpus_id].push_back(i);
  }
  table.cells.assign(table.rows.size(), std::vector<ProxyCell>(table.corpora.size()));

  for (std::size_t c = 0; c < table.corpora.size(); ++c) {
    const auto& idx = by_corpus[table.corpora[c]];
    std::vector<double> indicator, gold;
    for (auto i : idx) {
      indicator.push_back(pronoun_indicator(instances[i].generation, tagger));
      gold.push_back(instances[i].gold_label);
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      auto& cell = table.cells[r][c];
      try {
        std::vector<double> values;
        if (r + 1 == table.rows.size()) {
          values = gold;
        } else {
          const auto& col = scores.column(table.rows[r]);
          for (auto i : idx) {
            auto it = row_of_uid.find(instances[i].uid);
            if (it == row_of_uid.end())
              throw AlignmentError("no score for uid " + instances[i].uid);
            values.push_back(col[it->second]);
          }
        }
        cell.result = kendall_tau_b(indicator, values, "pronoun_i", table.rows[r]);
      } catch (const UndefinedCorrelationError& e) {
        cell.error = e.what();
      }
    }
  }
  return table;
}

std::string ProxyTable::to_csv() const {
  std::ostringstream os;
  csv::Row header = {"method"};
  header.insert(header.end(), corpora.begin(), corpora.end());
  csv::write_row(os, header);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    csv::Row row = {rows[r]};
    for (const auto& cell : cells[r]) row.push_back(cell.result ? fmt(cell.result->tau) : "NA");
    csv::write_row(os, row);
  }
  return os.str();
}

// ---------------------------------------------------------------------------

HistogramData score_histogram(std::span<const double> scores, std::span<const int> labels,
                              scoring::ScoreMode mode, int bins) {
  if (scores.empty()) throw UsageError("score_histogram: no scores");
  if (scores.size() != labels.size()) throw UsageError("score_histogram: length mismatch");
  if (bins < 1) throw UsageError("score_histogram: bins must be >= 1");
  const double lo = mode == scoring::ScoreMode::kEntailmentOnly ? 0.0 : -1.0;
  const double hi = 1.0;
  const double width = (hi - lo) / bins;

  HistogramData h;
  h.mode = mode;
  for (int b = 0; b < bins; ++b) h.bin_edges.push_back(lo + b * width);
  h.bin_edges.push_back(hi);
  h.counts_faithful.assign(static_cast<std::size_t>(bins), 0);
  h.counts_unfaithful.assign(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    if (!(s >= lo - 1e-9 && s <= hi + 1e-9)) {
      throw UsageError("score " + std::to_string(s) + " outside the " +
                       std::string(scoring::to_string(mode)) + " range");
    }
    auto b = static_cast<long>(std::floor((s - lo) / width));
    b = std::clamp(b, 0L, static_cast<long>(bins) - 1);
    (labels[i] == 1 ? h.counts_faithful : h.counts_unfaithful)[static_cast<std::size_t>(b)]++;
  }
  return h;
}

std::string HistogramData::to_csv() const {
  std::ostringstream os;
  os << "bin_low,bin_high,faithful_count,unfaithful_count\n";
  for (std::size_t b = 0; b < counts_faithful.size(); ++b) {
    os << csv::format_double(bin_edges[b]) << ',' << csv::format_double(bin_edges[b + 1]) << ','
       << counts_faithful[b] << ',' << counts_unfaithful[b] << '\n';
  }
  return os.str();
}

std::string HistogramData::to_svg(std::string_view title) const {
  constexpr double kW = 640, kH = 360, kPad = 40;
  std::size_t peak = 1;
  for (std::size_t b = 0; b < counts_faithful.size(); ++b)
    peak = std::max({peak, counts_faithful[b], counts_unfaithful[b]});
  const double bw = (kW - 2 * kPad) / static_cast<double>(counts_faithful.size());
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty())
    os << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
  auto bars = [&](const std::vector<std::size_t>& counts, const char* color, double offset) {
    for (std::size_t b = 0; b < counts.size(); ++b) {
      const double h = (kH - 2 * kPad) * static_cast<double>(counts[b]) / static_cast<double>(peak);
      os << "<rect x=\"" << kPad + b * bw + offset << "\" y=\"" << kH - kPad - h << "\" width=\""
         << bw / 2 << "\" height=\"" << h << "\" fill=\"" << color << "\"/>\n";
    }
  };
  bars(counts_faithful, "#1f77b4", 0.0);
  bars(counts_unfaithful, "#d62728", bw / 2);
  os << "<text x=\"" << kPad << "\" y=\"" << kH - 10 << "\">" << csv::format_double(bin_edges.front())
     << "</text>\n<text x=\"" << kW - kPad << "\" y=\"" << kH - 10 << "\" text-anchor=\"end\">"
     << csv::format_double(bin_edges.back()) << "</text>\n"
     << "<text x=\"" << kW - kPad << "\" y=\"40\" text-anchor=\"end\" fill=\"#1f77b4\">faithful</text>\n"
     << "<text x=\"" << kW - kPad << "\" y=\"56\" text-anchor=\"end\" fill=\"#d62728\">unfaithful</text>\n"
     << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------------------

std::vector<CorrelationResult> begin_bias_report(
    std::span<const io::FaithfulnessInstance> instances, const PronounTagger& tagger) {
  if (instances.empty()) throw UsageError("begin_bias_report: no instances");
  struct Row {
    std::string model;
    double pronoun;
    double faithful;
  };
  std::vector<Row> rows;
  for (const auto& inst : instances) {
    if (!inst.generator_model || inst.generator_model->empty()) {
      throw UnsupportedCorpusError("corpus '" + inst.corpus_id +
                                   "' has no generator model id for " + inst.uid);
    }
    rows.push_back({normalize_model(*inst.generator_model),
                    static_cast<double>(pronoun_indicator(inst.generation, tagger)),
                    static_cast<double>(inst.gold_label)});
  }
  auto is_gpt2 = [](const std::string& m) { return m.find("gpt2") != std::string::npos; };
  auto is_t5 = [](const std::string& m) { return m.rfind("t5", 0) == 0; };
  auto is_ctrl = [](const std::string& m) { return m.find("ctrl") != std::string::npos; };

  std::vector<double> model, pron, faith, model_np, faith_np;
  for (const auto& r : rows) {
    if (!is_gpt2(r.model) && !is_t5(r.model)) continue;
    const double g = is_gpt2(r.model) ? 1.0 : 0.0;
    model.push_back(g);
    pron.push_back(r.pronoun);
    faith.push_back(r.faithful);
    if (r.pronoun == 0.0) {
      model_np.push_back(g);
      faith_np.push_back(r.faithful);
    }
  }
  if (model.empty() || std::count(model.begin(), model.end(), 1.0) == 0 ||
      std::count(model.begin(), model.end(), 0.0) == 0) {
    throw UnsupportedCorpusError("corpus needs both GPT-2 and T5 outputs for the bias study");
  }

  std::vector<CorrelationResult> out;
  out.push_back(kendall_tau_b(model, pron, "gpt2_vs_t5", "pronoun_i"));
  out.push_back(kendall_tau_b(model, faith, "gpt2_vs_t5", "faithful"));
  out.push_back(kendall_tau_b(model_np, faith_np, "gpt2_vs_t5", "faithful|no_pronoun"));

  if (std::any_of(rows.begin(), rows.end(), [&](const Row& r) { return is_ctrl(r.model); })) {
    std::vector<double> ctrl, all_pron, all_faith;
    for (const auto& r : rows) {
      ctrl.push_back(is_ctrl(r.model) ? 1.0 : 0.0);
      all_pron.push_back(r.pronoun);
      all_faith.push_back(r.faithful);
    }
    out.push_back(kendall_tau_b(ctrl, all_faith, "ctrl_dialog", "faithful"));
    out.push_back(kendall_tau_b(ctrl, all_pron, "ctrl_dialog", "pronoun_i"));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t count_sentences(std::string_view text) {
  std::size_t n = 0;
  bool in_sentence = false;
  for (char c : text) {
    if (c == '.' || c == '!' || c == '?') {
      if (in_sentence) ++n;
      in_sentence = false;
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      in_sentence = true;
    }
  }
  return n + (in_sentence ? 1 : 0);
}

CostReport cost_report(const scoring::MetricConfig& cfg, const CorpusSummary& corpus,
                       std::optional<std::uint64_t> measured_mc,
                       std::optional<std::uint64_t> measured_no_mc) {
  const double n = static_cast<double>(corpus.instances);
  CostReport report;
  report.convention =
      "#snt x #snt = input sentences x output sentences per instance; "
      "Q2 = #Q x (Ql + 2) (Ql question-generation steps, one QA and one NLI call per question)";
  auto row = [&](std::string metric, std::string params, std::string expr, double per,
                 std::optional<std::uint64_t> measured) {
    report.rows.push_back({std::move(metric), std::move(params), std::move(expr), per, per * n,
                           measured});
  };
  const double k = static_cast<double>(cfg.k);
  row("SummacZS", "355", "#snt x #snt", corpus.input_sentences * corpus.output_sentences,
      std::nullopt);
  row("T5 ANLI", "11,000", "1", 1.0, std::nullopt);
  row("Q2", "220 + 355 + 355", "#Q x (Ql + 2)",
      corpus.questions * (corpus.question_length + 2.0), std::nullopt);
  row("-MC", "350", "1", 1.0, measured_no_mc);
  row("All", "350", std::to_string(cfg.k), k, measured_mc);
  return report;
}

std::string CostReport::to_csv() const {
  std::ostringstream os;
  csv::write_row(os, {"metric", "parameters_millions", "calls_expression", "calls_per_instance",
                      "estimated_calls", "measured_calls"});
  for (const auto& r : rows) {
    csv::write_row(os, {r.metric, r.parameters_millions, r.calls_expression,
                        csv::format_double(r.calls_per_instance),
                        csv::format_double(r.estimated_calls),
                        r.measured_calls ? std::to_string(*r.measured_calls) : ""});
  }
  return os.str();
}

std::string CostReport::to_markdown() const {
  std::ostringstream os;
  os << "| Method | Params (M) | Model calls | Calls/instance | Estimated | Measured |\n"
     << "|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    os << "| " << r.metric << " | " << r.parameters_millions << " | " << r.calls_expression
       << " | " << fmt(r.calls_per_instance, 2) << " | " << fmt(r.estimated_calls, 0) << " | "
       << (r.measured_calls ? std::to_string(*r.measured_calls) : "-") << " |\n";
  }
  os << "\nConvention: " << convention << "\n";
  return os.str();
}

}  // namespace nlifaith::analysis

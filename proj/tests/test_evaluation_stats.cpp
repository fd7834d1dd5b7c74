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


#include <doctest.h>

#include <cmath>
#include <random>

#include "nlifaith/errors.hpp"
#include "nlifaith/evaluation_stats.hpp"
#include "nlifaith/random.hpp"
#include "support.hpp"

using namespace nlifaith;
using namespace nlifaith::stats;
using testing::auc_by_pairs;

namespace {

struct Data {
  std::vector<double> s;
  std::vector<int> y;
};

// Random labelled scores with both classes present; coarse values force ties.
Data make_data(std::mt19937_64& rng, std::size_t n, int levels = 0) {
  Data d;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = u(rng) < 0.4 ? 1 : 0;
    double s = u(rng) + 0.3 * y;
    if (levels) s = std::floor(s * levels) / levels;
    d.s.push_back(s);
    d.y.push_back(y);
  }
  d.y[0] = 1;
  d.y[1] = 0;
  return d;
}

// 2 * (wins + ties / 2) over all positive-negative pairs.
long long twice_wins(std::span<const double> s, std::span<const int> y) {
  long long w = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) w += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
  return w;
}

// The randomization test spelled out: swap bit i of the permutation's
// random words decides whether instance i's two scores trade places.
double randomization_p_by_hand(const std::vector<double>& a, const std::vector<double>& b,
                               const std::vector<int>& y, int R, std::uint64_t seed) {
  const long long obs = twice_wins(a, y) - twice_wins(b, y);
  int hits = 0;
  for (int r = 0; r < R; ++r) {
    CounterRng rng(seed, r);
    std::vector<std::uint64_t> words((a.size() + 63) / 64);
    for (auto& w : words) w = rng();
    auto pa = a, pb = b;
    for (std::size_t i = 0; i < a.size(); ++i)
      if ((words[i / 64] >> (i % 64)) & 1) std::swap(pa[i], pb[i]);
    if (twice_wins(pa, y) - twice_wins(pb, y) >= obs) ++hits;
  }
  return (hits + 1.0) / (R + 1.0);
}

// One stratified resample drawn the documented way, scored by brute force.
double bootstrap_auc_by_hand(const Data& d, std::uint64_t seed, int b) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < d.y.size(); ++i) (d.y[i] ? pos : neg).push_back(i);
  CounterRng rng(seed, b);
  Data r;
  for (std::size_t j = 0; j < pos.size(); ++j) {
    r.s.push_back(d.s[pos[rng.below(pos.size())]]);
    r.y.push_back(1);
  }
  for (std::size_t j = 0; j < neg.size(); ++j) {
    r.s.push_back(d.s[neg[rng.below(neg.size())]]);
    r.y.push_back(0);
  }
  return auc_by_pairs(r.s, r.y);
}

}  // namespace

TEST_CASE("roc_auc matches pair counting") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 300; ++t) {
    auto d = make_data(rng, 2 + rng() % 120, t % 3 ? 0 : 5);
    CHECK(std::abs(roc_auc(d.s, d.y) - auc_by_pairs(d.s, d.y)) <= 1e-12);
  }
}

TEST_CASE("roc_auc special cases") {
  std::vector<int> y = {0, 0, 1, 1};
  CHECK(roc_auc(std::vector<double>{0, 1, 2, 3}, y) == 1.0);
  CHECK(roc_auc(std::vector<double>{3, 2, 1, 0}, y) == 0.0);
  CHECK(roc_auc(std::vector<double>{1, 1, 1, 1}, y) == 0.5);
  CHECK(roc_auc(std::vector<double>{0, 1, 1, 2}, y) == 0.875);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{1, 2}, std::vector<int>{1, 1}), DegenerateInputError);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{1, 2}, std::vector<int>{1}), UsageError);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{1, NAN}, std::vector<int>{1, 0}), UsageError);
  CHECK_THROWS_AS(roc_auc(std::vector<double>{1, 2}, std::vector<int>{1, 2}), UsageError);
}

TEST_CASE("AUC is rank-invariant") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    auto d = make_data(rng, 80, t % 2 ? 6 : 0);
    std::vector<double> affine, expo;
    for (double s : d.s) {
      affine.push_back(3.5 * s - 2.0);
      expo.push_back(std::exp(s));
    }
    CHECK(roc_auc(affine, d.y) == roc_auc(d.s, d.y));
    CHECK(roc_auc(expo, d.y) == roc_auc(d.s, d.y));
  }
}

TEST_CASE("percentile uses linear interpolation between order statistics") {
  CHECK(percentile({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
  CHECK(percentile({3, 1, 4, 1, 5, 9, 2, 6}, 0.025) == doctest::Approx(1.0));
  CHECK(percentile({3, 1, 4, 1, 5, 9, 2, 6}, 0.975) == doctest::Approx(8.475));
  CHECK(percentile({7}, 0.3) == 7);
  CHECK_THROWS_AS(percentile({}, 0.5), UsageError);
  CHECK_THROWS_AS(percentile({1, 2}, 1.5), UsageError);
}

TEST_CASE("bootstrap replicates follow the stratified recipe") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    auto d = make_data(rng, 40 + t, t % 2 ? 4 : 0);
    const auto boot = bootstrap_aucs(d.s, d.y, 25, 77 + t);
    for (int b = 0; b < 25; ++b)
      CHECK(std::abs(boot[b] - bootstrap_auc_by_hand(d, 77 + t, b)) <= 1e-12);
  }
}

TEST_CASE("bootstrap interval") {
  std::mt19937_64 rng(4);
  auto d = make_data(rng, 150);
  const auto ci = bootstrap_ci(d.s, d.y, 500, 0.05, 9);
  const auto again = bootstrap_ci(d.s, d.y, 500, 0.05, 9);
  CHECK(ci.low == again.low);
  CHECK(ci.high == again.high);
  CHECK(ci.low <= ci.high);
  const auto boot = bootstrap_aucs(d.s, d.y, 500, 9);
  CHECK(ci.low == percentile(boot, 0.025));
  CHECK(ci.high == percentile(boot, 0.975));
  const auto narrow = bootstrap_ci(d.s, d.y, 500, 0.5, 9);
  CHECK(narrow.low >= ci.low);
  CHECK(narrow.high <= ci.high);
  CHECK_THROWS_AS(bootstrap_ci(d.s, d.y, 0), UsageError);
  CHECK_THROWS_AS(bootstrap_ci(d.s, d.y, 10, 1.0), UsageError);
}

TEST_CASE("randomization test") {
  std::mt19937_64 rng(5);
  SUBCASE("agrees with the spelled-out version") {
    for (int t = 0; t < 6; ++t) {
      auto d = make_data(rng, 30 + 25 * t, t % 2 ? 5 : 0);
      auto e = make_data(rng, d.s.size(), t % 2 ? 5 : 0);
      const auto res = paired_randomization_test(d.s, e.s, d.y, 200, 40 + t);
      CHECK(res.p_value == randomization_p_by_hand(d.s, e.s, d.y, 200, 40 + t));
      CHECK(res.observed_diff == doctest::Approx(roc_auc(d.s, d.y) - roc_auc(e.s, d.y)));
      CHECK(res.permutations == 200);
    }
  }
  SUBCASE("identical systems give p = 1") {
    auto d = make_data(rng, 90, 4);
    CHECK(paired_randomization_test(d.s, d.s, d.y, 500, 1).p_value == 1.0);
  }
  SUBCASE("a clearly better system is significant") {
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> good, weak;
    std::vector<int> y;
    for (int i = 0; i < 200; ++i) {
      y.push_back(i % 2);
      good.push_back(1.5 * y.back() + z(rng));
      weak.push_back(0.3 * y.back() + z(rng));
    }
    const auto res = paired_randomization_test(good, weak, y, 2000, 3);
    CHECK(res.p_value <= 0.05);
    CHECK(paired_randomization_test(weak, good, y, 2000, 3).p_value > 0.5);
  }
  SUBCASE("argument checks") {
    auto d = make_data(rng, 20);
    std::vector<double> short_list(10, 0.0);
    CHECK_THROWS_AS(paired_randomization_test(d.s, short_list, d.y), UsageError);
    CHECK_THROWS_AS(paired_randomization_test(d.s, d.s, d.y, 0), UsageError);
  }
}

TEST_CASE("macro randomization test") {
  std::mt19937_64 rng(6);
  auto d = make_data(rng, 60, 3);
  auto e = make_data(rng, 60, 3);
  std::vector<PairedCorpusScores> one = {{"c1", d.s, e.s, d.y}};
  const auto macro = paired_randomization_test_macro(one, 300, 11);
  const auto single =
      paired_randomization_test(d.s, e.s, d.y, 300, hash_combine(11, hash_string("c1")));
  CHECK(macro.p_value == single.p_value);
  CHECK(macro.corpus_id == "avg");

  std::vector<PairedCorpusScores> same = {{"c1", d.s, d.s, d.y}, {"c2", e.s, e.s, d.y}};
  CHECK(paired_randomization_test_macro(same, 300, 2).p_value == 1.0);
}

TEST_CASE("evaluate") {
  std::mt19937_64 rng(7);
  std::vector<CorpusScores> corpora;
  for (int c = 0; c < 3; ++c) {
    auto d = make_data(rng, 60 + 20 * c);
    corpora.push_back({"c" + std::to_string(c), d.s, d.y});
  }
  const auto rep = evaluate(corpora, 300, 0.05, 5);
  REQUIRE(rep.per_corpus.size() == 3);
  double mean = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const auto& a = rep.per_corpus[c];
    CHECK(a.corpus_id == corpora[c].corpus_id);
    CHECK(a.auc == roc_auc(corpora[c].scores, corpora[c].labels));
    CHECK(a.ci_low <= a.auc);
    CHECK(a.auc <= a.ci_high);
    CHECK(a.n == corpora[c].scores.size());
    mean += a.auc / 3.0;
  }
  CHECK(rep.macro_avg.auc == doctest::Approx(mean).epsilon(1e-15));
  CHECK(rep.macro_avg.ci_low <= rep.macro_avg.auc);
  CHECK(rep.macro_avg.auc <= rep.macro_avg.ci_high);
  CHECK(macro_average(std::vector<double>{0.5, 1.0}) == 0.75);
  CHECK_THROWS_AS(evaluate({}, 10), UsageError);
}

TEST_CASE("ablation differences") {
  std::mt19937_64 rng(8);
  auto d = make_data(rng, 120);
  std::vector<double> mono;
  for (double s : d.s) mono.push_back(std::exp(2.0 * s) - 1.0);
  const auto self = ablation_diff(d.s, mono, d.y, 300, 3);
  CHECK(self.delta_auc == 0.0);
  CHECK(self.ci_low == 0.0);
  CHECK(self.ci_high == 0.0);

  auto e = make_data(rng, 120);
  const auto diff = ablation_diff(d.s, e.s, d.y, 300, 3);
  CHECK(diff.delta_auc == roc_auc(d.s, d.y) - roc_auc(e.s, d.y));
  CHECK(diff.ci_low <= diff.delta_auc);
  CHECK(diff.delta_auc <= diff.ci_high);

  std::vector<PairedCorpusScores> pcs = {{"a", d.s, e.s, d.y}, {"b", d.s, mono, d.y}};
  const auto rep = ablation_report(pcs, 200);
  REQUIRE(rep.size() == 3);
  CHECK(rep[1].delta_auc == 0.0);
  CHECK(rep[2].corpus_id == "avg");
  CHECK(rep[2].delta_auc == doctest::Approx((rep[0].delta_auc + rep[1].delta_auc) / 2));
}

TEST_CASE("score alignment") {
  std::vector<io::ScoreRow> rows = {{"a1", "a", "m1", 0.1}, {"a2", "a", "m1", 0.2},
                                    {"a2", "a", "m2", 0.3}, {"a1", "a", "m2", 0.4}};
  const auto t = align_scores(rows);
  CHECK(t.uids == std::vector<std::string>{"a1", "a2"});
  CHECK(t.column("m2") == std::vector<double>{0.4, 0.3});
  CHECK_THROWS_AS(t.column("m3"), UsageError);

  auto missing = rows;
  missing.pop_back();
  try {
    align_scores(missing);
    FAIL("expected AlignmentError");
  } catch (const AlignmentError& e) {
    CHECK(std::string(e.what()).find("m2: a1") != std::string::npos);
  }
  auto dup = rows;
  dup.push_back({"a1", "a", "m1", 0.9});
  CHECK_THROWS_AS(align_scores(dup), AlignmentError);
  auto clash = rows;
  clash[1].corpus = "b";
  CHECK_THROWS_AS(align_scores(clash), AlignmentError);
}

TEST_CASE("ensembles") {
  std::vector<io::ScoreRow> rows = {{"a1", "a", "m1", 0.0}, {"a2", "a", "m1", 10.0},
                                    {"b1", "b", "m1", 5.0}, {"b2", "b", "m1", 5.0},
                                    {"a1", "a", "m2", 1.0}, {"a2", "a", "m2", 0.0},
                                    {"b1", "b", "m2", 2.0}, {"b2", "b", "m2", 4.0}};
  const auto t = align_scores(rows);
  const std::vector<std::string> both = {"m1", "m2"};
  CHECK(ensemble_scores(t, both) == std::vector<double>{0.5, 0.5, 0.25, 0.75});
  CHECK(ensemble_scores(t, both, EnsembleRule::kMean) == std::vector<double>{0.5, 5.0, 3.5, 4.5});
  CHECK(ensemble_scores(t, both, EnsembleRule::kRankMean) ==
        std::vector<double>{0.5, 0.5, 0.25, 0.75});
  const std::vector<std::string> one = {"m1"};
  CHECK_THROWS_AS(ensemble_scores(t, one), UsageError);
  CHECK(parse_ensemble_rule(to_string(EnsembleRule::kRankMean)) == EnsembleRule::kRankMean);
}

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

#include "nlifaith/backend.hpp"
#include "nlifaith/errors.hpp"
#include "nlifaith/nli_scoring.hpp"

using namespace nlifaith;
using scoring::NLIProbs;

namespace {

NLIProbs random_probs(std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  double a = g(rng), b = g(rng), c = g(rng);
  const double s = a + b + c;
  return {a / s, b / s, 1.0 - a / s - b / s};
}

std::vector<io::FaithfulnessInstance> small_corpus(std::size_t n) {
  std::vector<io::FaithfulnessInstance> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({io::make_uid("toy", i), "toy", "source text " + std::to_string(i),
                   "claim " + std::to_string(i * 7), static_cast<int>(i % 2), std::nullopt});
  return out;
}

}  // namespace

TEST_CASE("e-c score and mode selection") {
  const NLIProbs p{0.7, 0.2, 0.1};
  CHECK(scoring::e_minus_c(p) == doctest::Approx(0.6));
  CHECK(scoring::apply_mode(p, scoring::ScoreMode::kEntailmentOnly) == 0.7);
  CHECK(scoring::e_minus_c({1, 0, 0}) == 1.0);
  CHECK(scoring::e_minus_c({0, 0, 1}) == -1.0);
  CHECK(scoring::e_minus_c({0, 1, 0}) == 0.0);
}

TEST_CASE("probability vectors are validated") {
  CHECK(scoring::is_valid({0.2, 0.3, 0.5}));
  CHECK_FALSE(scoring::is_valid({0.2, 0.3, 0.6}));
  CHECK_FALSE(scoring::is_valid({-0.1, 0.6, 0.5}));
  CHECK_FALSE(scoring::is_valid({NAN, 0.5, 0.5}));
  CHECK_THROWS_AS(scoring::validate({0.5, 0.5, 0.5}, "test"), ValidationError);
}

TEST_CASE("score mode parsing") {
  CHECK(scoring::parse_score_mode("e") == scoring::ScoreMode::kEntailmentOnly);
  CHECK(scoring::parse_score_mode("e-c") == scoring::ScoreMode::kEntailmentMinusContradiction);
  CHECK_THROWS_AS(scoring::parse_score_mode("c"), UsageError);
}

TEST_CASE("mc_aggregate") {
  SUBCASE("constant samples reproduce the sample exactly") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 200; ++t) {
      const NLIProbs p = random_probs(rng);
      std::vector<NLIProbs> same(1 + t % 20, p);
      CHECK(scoring::mc_aggregate(same) == p);
    }
  }
  SUBCASE("mean is linear through both scores") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 300; ++t) {
      std::vector<NLIProbs> s(1 + t % 25);
      for (auto& p : s) p = random_probs(rng);
      for (auto mode : {scoring::ScoreMode::kEntailmentOnly,
                        scoring::ScoreMode::kEntailmentMinusContradiction}) {
        double mean = 0.0;
        for (const auto& p : s) mean += scoring::apply_mode(p, mode);
        mean /= static_cast<double>(s.size());
        CHECK(std::abs(scoring::apply_mode(scoring::mc_aggregate(s), mode) - mean) <= 1e-12);
      }
    }
  }
  SUBCASE("bad input") {
    CHECK_THROWS_AS(scoring::mc_aggregate({}), UsageError);
    std::vector<NLIProbs> bad = {{0.9, 0.9, 0.9}};
    CHECK_THROWS_AS(scoring::mc_aggregate(bad), ValidationError);
  }
}

TEST_CASE("truncate_tail keeps the first tokens") {
  auto t = scoring::truncate_tail("a bb  ccc dddd", 2);
  CHECK(t.text == "a bb");
  CHECK(t.truncated);
  auto u = scoring::truncate_tail("  a bb ", 2);
  CHECK_FALSE(u.truncated);
  CHECK(u.text == "  a bb ");
  CHECK_FALSE(scoring::truncate_tail("", 3).truncated);
}

TEST_CASE("metric config") {
  scoring::MetricConfig c;
  CHECK(c.mode == scoring::ScoreMode::kEntailmentMinusContradiction);
  CHECK(c.mc_enabled);
  CHECK(c.k == 15);
  CHECK(c.default_metric_id() == "e-c+mc15");
  CHECK(c.samples_per_instance() == 15);

  auto d = c;
  d.batch_size = 3;
  CHECK(d.digest() == c.digest());
  d.k = 14;
  CHECK(d.digest() != c.digest());
  d = c;
  d.base_seed = 1;
  CHECK(d.digest() != c.digest());
  d = c;
  d.mode = scoring::ScoreMode::kEntailmentOnly;
  CHECK(d.digest() != c.digest());

  auto off1 = c, off2 = c;
  off1.mc_enabled = off2.mc_enabled = false;
  off2.k = 3;
  CHECK(off1.digest() == off2.digest());
  CHECK(off1.default_metric_id() == "e-c");
  CHECK(off1.samples_per_instance() == 1);

  d = c;
  d.k = 0;
  CHECK_THROWS_AS(d.validate(), UsageError);
  d = c;
  d.batch_size = 0;
  CHECK_THROWS_AS(d.validate(), UsageError);
}

TEST_CASE("score_pair on the mock backend") {
  MockBackend mock;
  scoring::MetricConfig cfg;
  auto rec = scoring::score_pair("the cat sat", "a cat sat", cfg, mock, "u1");
  CHECK(rec.prob_samples.size() == 15);
  CHECK(mock.call_counter() == 15);
  CHECK(rec.metric_id == "e-c+mc15");
  CHECK(rec.ok());
  for (int i = 0; i < 15; ++i)
    CHECK(rec.prob_samples[i] == mock.classify_one("the cat sat", "a cat sat", true, i));

  cfg.mc_enabled = false;
  cfg.mode = scoring::ScoreMode::kEntailmentOnly;
  auto plain = scoring::score_pair("the cat sat", "a cat sat", cfg, mock, "u1");
  CHECK(plain.prob_samples.size() == 1);
  CHECK(mock.call_counter() == 16);
  CHECK(plain.score == mock.classify_one("the cat sat", "a cat sat", false, 0).entailment);

  CHECK_THROWS_AS(scoring::score_pair("x", "", cfg, mock, "u2"), ValidationError);
}

TEST_CASE("zero-noise MC equals the plain score") {
  MockBackend quiet(MockBackend::Options{0.0, {}, {}});
  scoring::MetricConfig mc, plain;
  plain.mc_enabled = false;
  for (int i = 0; i < 50; ++i) {
    const std::string g = "doc " + std::to_string(i), h = "claim " + std::to_string(i);
    CHECK(scoring::score_pair(g, h, mc, quiet).score ==
          scoring::score_pair(g, h, plain, quiet).score);
  }
}

TEST_CASE("score_dataset does not depend on batch size") {
  const auto corpus = small_corpus(23);
  scoring::MetricConfig cfg;
  cfg.k = 4;
  std::vector<std::vector<scoring::ScoreRecord>> runs;
  for (int b : {1, 3, 7, 1000}) {
    MockBackend mock;
    cfg.batch_size = b;
    runs.push_back(scoring::score_dataset(corpus, cfg, mock));
    CHECK(mock.call_counter() == 23 * 4);
  }
  for (const auto& r : runs) {
    REQUIRE(r.size() == corpus.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      CHECK(r[i].instance_uid == corpus[i].uid);
      CHECK(r[i].score == runs[0][i].score);
      CHECK(r[i].prob_samples == runs[0][i].prob_samples);
    }
  }
  // Agrees with scoring each pair on its own.
  MockBackend mock;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    CHECK(scoring::score_pair(corpus[i].grounding, corpus[i].generation, cfg, mock).score ==
          runs[0][i].score);
}

TEST_CASE("score_dataset isolates failing instances") {
  auto corpus = small_corpus(10);
  corpus[3].grounding = "BROKEN source";
  corpus[6].generation.clear();
  MockBackend mock(MockBackend::Options{0.5, {}, "BROKEN"});
  scoring::MetricConfig cfg;
  cfg.k = 3;
  cfg.batch_size = 5;
  const auto recs = scoring::score_dataset(corpus, cfg, mock);
  REQUIRE(recs.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    if (i == 3 || i == 6) {
      CHECK_FALSE(recs[i].ok());
      CHECK(std::isnan(recs[i].score));
      CHECK(recs[i].error->find(corpus[i].uid) != std::string::npos);
    } else {
      CHECK(recs[i].ok());
      CHECK(recs[i].prob_samples.size() == 3);
    }
  }
  CHECK(mock.call_counter() == 8 * 3);
  CHECK_THROWS_AS(scoring::score_dataset({}, cfg, mock), UsageError);
}

TEST_CASE("long groundings are truncated and flagged") {
  std::string long_doc;
  for (int i = 0; i < 600; ++i) long_doc += "w" + std::to_string(i) + " ";
  MockBackend mock;
  scoring::MetricConfig cfg;
  cfg.mc_enabled = false;
  auto rec = scoring::score_pair(long_doc, "claim", cfg, mock);
  CHECK(rec.truncated);
  CHECK(rec.prob_samples[0] ==
        mock.classify_one(scoring::truncate_tail(long_doc, 512).text, "claim", false, 0));
}

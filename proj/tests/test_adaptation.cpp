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
#include <map>
#include <set>

#include "nlifaith/adaptation.hpp"
#include "nlifaith/data_io.hpp"
#include "nlifaith/errors.hpp"
#include "nlifaith/util.hpp"
#include "support.hpp"

using namespace nlifaith;
using namespace nlifaith::adaptation;
using testing::TempDir;

namespace {

std::vector<NLIInstance> nli_corpus(std::size_t n) {
  std::vector<NLIInstance> out;
  const NliLabel labels[] = {NliLabel::kEntailment, NliLabel::kNeutral, NliLabel::kContradiction};
  for (std::size_t i = 0; i < n; ++i) {
    NLIInstance x;
    x.uid = "u" + std::to_string(i);
    x.premise = "premise " + std::to_string(i);
    x.hypothesis = "hypothesis " + std::to_string(i);
    x.label = labels[(i * 7) % 3];
    x.source_round = i % 2 ? "r1" : "r2";
    out.push_back(x);
  }
  return out;
}

std::map<NliLabel, std::size_t> label_counts(std::span<const NLIInstance> v) {
  std::map<NliLabel, std::size_t> c;
  for (const auto& x : v) c[x.label]++;
  return c;
}

class FakeTrainer : public Trainer {
 public:
  // val loss per learning rate, one per checkpoint
  std::map<double, std::vector<double>> losses;
  std::vector<TrainRequest> seen;

  std::vector<CheckpointEval> train(const TrainRequest& r) override {
    seen.push_back(r);
    std::vector<CheckpointEval> out;
    const auto& l = losses.at(r.config.learning_rate);
    for (std::size_t i = 0; i < l.size(); ++i) {
      const int step = r.config.checkpoint_interval * static_cast<int>(i + 1);
      out.push_back({step, (r.output_dir / ("checkpoint-" + std::to_string(step))).string(), l[i]});
    }
    return out;
  }
};

}  // namespace

TEST_CASE("default phrase set") {
  const auto s = PhraseSet::default_set();
  REQUIRE(s.size() == 10);
  std::map<PhraseCategory, int> per;
  for (const auto& p : s.entries()) per[p.category]++;
  CHECK(per[PhraseCategory::kIntroductory] == 3);
  CHECK(per[PhraseCategory::kHedging] == 5);
  CHECK(per[PhraseCategory::kSentiment] == 2);
  CHECK(s[0].text == "Here is what I know:");
  CHECK(s[9].text == "I like that!");
}

TEST_CASE("phrase set text format") {
  const auto s = PhraseSet::default_set();
  CHECK(PhraseSet::parse(s.serialize()) == s);
  auto custom = PhraseSet::parse("# mine\n[hedging]\nMaybe\n\n[sentiment]\nNice!\n");
  REQUIRE(custom.size() == 2);
  CHECK(custom[1].category == PhraseCategory::kSentiment);
  CHECK_THROWS_AS(PhraseSet::parse("Maybe\n"), SchemaError);
  CHECK_THROWS_AS(PhraseSet::parse("[odd]\nx\n"), UsageError);
  CHECK_THROWS_AS(PhraseSet::parse("[hedging]\nx\nx\n"), UsageError);
  CHECK_THROWS_AS(PhraseSet({}), UsageError);
}

TEST_CASE("augmenting one instance") {
  const auto x = nli_corpus(1)[0];
  const auto a = augment_instance(x, "I think");
  CHECK(a.hypothesis == "I think " + x.hypothesis);
  CHECK(a.premise == x.premise);
  CHECK(a.label == x.label);
  CHECK(a.augmented);
  CHECK(a.phrase_used == "I think");
  CHECK(a.uid == x.uid + "#aug");
  CHECK(strip_augmentation(a) == x);
  CHECK_THROWS(augment_instance(a, "again"));
}

TEST_CASE("augmented corpus invariants") {
  const auto corpus = nli_corpus(1000);
  const auto phrases = PhraseSet::default_set();
  const auto out = build_augmented_corpus(corpus, phrases, 7);
  REQUIRE(out.size() == 2000);
  std::set<std::string> texts;
  for (const auto& p : phrases.entries()) texts.insert(p.text);
  std::vector<NLIInstance> aug_half(out.begin() + 1000, out.end());
  for (std::size_t i = 0; i < 1000; ++i) {
    CHECK(out[i] == corpus[i]);
    const auto& a = aug_half[i];
    CHECK(a.augmented);
    CHECK(texts.count(*a.phrase_used));
    CHECK(strip_augmentation(a) == corpus[i]);
    CHECK(a.source_round == corpus[i].source_round);
  }
  CHECK(label_counts(aug_half) == label_counts(corpus));

  CHECK(build_augmented_corpus(corpus, phrases, 7) == out);
  CHECK_FALSE(build_augmented_corpus(corpus, phrases, 8) == out);
}

TEST_CASE("phrase choice is close to uniform") {
  std::vector<int> hits(10);
  const int n = 20000;
  for (int i = 0; i < n; ++i) hits[phrase_choice(3, i, 10)]++;
  double chi2 = 0.0;
  for (int h : hits) chi2 += (h - n / 10.0) * (h - n / 10.0) / (n / 10.0);
  // 9 degrees of freedom; 27.9 is the 0.999 quantile.
  CHECK(chi2 < 27.9);
}

TEST_CASE("phrase subsets") {
  const auto all = PhraseSet::default_set();
  SUBCASE("shape") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      auto s = sample_phrase_subset(all, 5, seed);
      REQUIRE(s.size() == 5);
      // Order follows the full set.
      std::size_t last = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        std::size_t pos = 0;
        while (!(all[pos] == s[i])) ++pos;
        if (i) CHECK(pos > last);
        last = pos;
      }
    }
    CHECK(sample_phrase_subset(all, 10, 3) == all);
    CHECK_THROWS_AS(sample_phrase_subset(all, 11, 3), UsageError);
    CHECK_THROWS_AS(sample_phrase_subset(all, 0, 3), UsageError);
  }
  SUBCASE("every phrase is included about half the time") {
    std::map<std::string, int> inc;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
      const auto s = sample_phrase_subset(all, 5, seed);
      for (const auto& p : s.entries()) inc[p.text]++;
    }
    for (const auto& [text, n] : inc) {
      INFO(text);
      CHECK(std::abs(n / 10000.0 - 0.5) < 0.015);
    }
    CHECK(inc.size() == 10);
  }
}

TEST_CASE("robustness protocol writes replayable repeats") {
  TempDir dir;
  const auto corpus = nli_corpus(60);
  const auto phrases = PhraseSet::default_set();
  const auto ms = run_robustness_protocol(corpus, phrases, dir.path(), 4, 5, 100);
  REQUIRE(ms.size() == 4);
  std::set<std::vector<std::string>> distinct;
  for (std::size_t r = 0; r < ms.size(); ++r) {
    const auto& m = ms[r];
    CHECK(m.repeat == r);
    CHECK(m.seed == 100 + r);
    CHECK(m.phrases.size() == 5);
    CHECK(m.instances == 120);
    CHECK(sha256_file(m.output_path) == m.content_sha256);
    CHECK(testing::count_lines(m.output_path) == 120);
    CHECK(replay_manifest(m, corpus, phrases));
    const auto disk = manifest_from_json(testing::read_file(m.output_path.parent_path() / "manifest.json"));
    CHECK(disk.content_sha256 == m.content_sha256);
    CHECK(disk.phrases == m.phrases);
    // Augmented lines only use this repeat's phrases.
    for (const auto& x : io::read_nli_jsonl(m.output_path))
      if (x.augmented)
        CHECK(std::find(m.phrases.begin(), m.phrases.end(), *x.phrase_used) != m.phrases.end());
    distinct.insert(m.phrases);
  }
  CHECK(distinct.size() > 1);

  auto tampered = ms[0];
  tampered.content_sha256[0] = tampered.content_sha256[0] == 'a' ? 'b' : 'a';
  CHECK_FALSE(replay_manifest(tampered, corpus, phrases));
  auto other = corpus;
  other[0].hypothesis += "!";
  CHECK_FALSE(replay_manifest(ms[0], other, phrases));
}

TEST_CASE("run summaries") {
  std::vector<std::map<std::string, double>> runs = {{{"a", 1.0}, {"b", 5.0}},
                                                     {{"a", 3.0}, {"b", 5.0}}};
  auto s = summarize_runs(runs);
  CHECK(s["a"].mean == 2.0);
  CHECK(s["a"].stddev == 1.0);
  CHECK(s["a"].min == 1.0);
  CHECK(s["a"].max == 3.0);
  CHECK(s["b"].stddev == 0.0);
  CHECK(s["a"].runs == 2);
}

TEST_CASE("training config checks") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.warmup_ratio == 0.06);
  CHECK(c.effective_batch_size == 64);
  c.checkpoint_interval = 300;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = TrainConfig{};
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  CHECK(std::size(kReportedLearningRates) == 3);
}

TEST_CASE("finetune selects the lowest validation loss") {
  TempDir dir;
  FakeTrainer t;
  t.losses[5e-6] = {0.9, 0.5, 0.6, 0.7};
  t.losses[5e-2] = {0.8, 0.45, 0.9, 1.0};
  t.losses[5e-1] = {1.1, 1.2, 1.3, 1.4};
  const std::vector<double> lrs(std::begin(kReportedLearningRates), std::end(kReportedLearningRates));
  auto r = finetune("base", "train.jsonl", "val.jsonl", TrainConfig{}, lrs, dir.path(), t);
  CHECK(r.learning_rate == 5e-2);
  CHECK(r.step == 1000);
  CHECK(r.val_loss == 0.45);
  CHECK(t.seen.size() == 3);
  CHECK(t.seen[0].output_dir != t.seen[1].output_dir);
  CHECK(t.seen[2].config.learning_rate == 5e-1);
  CHECK(std::filesystem::exists(r.metadata_path));
}

TEST_CASE("finetune edge cases") {
  TempDir dir;
  SUBCASE("zero steps returns the input checkpoint") {
    FakeTrainer t;
    TrainConfig c;
    c.total_steps = 0;
    auto r = finetune("base", "t", "v", c, {}, dir.path(), t);
    CHECK(r.checkpoint == "base");
    CHECK(t.seen.empty());
  }
  SUBCASE("divergence is reported") {
    FakeTrainer t;
    t.losses[5e-6] = {0.9, NAN, 0.6, 0.7};
    CHECK_THROWS_AS(finetune("base", "t", "v", TrainConfig{}, {}, dir.path(), t), DivergenceError);
  }
}

TEST_CASE("script trainer talks to an external process") {
  TempDir dir;
  testing::write_file(dir / "fake.py", R"(import argparse, json
ap = argparse.ArgumentParser()
ap.add_argument("--request")
ap.add_argument("--result")
a = ap.parse_args()
req = json.load(open(a.request))
out = [{"step": s, "checkpoint": req["output_dir"] + "/c%d" % s, "val_loss": 1.0 / s}
       for s in range(req["checkpoint_interval"], req["total_steps"] + 1, req["checkpoint_interval"])]
json.dump({"checkpoints": out}, open(a.result, "w"))
)");
  ScriptTrainer trainer((dir / "fake.py").string());
  TrainConfig c;
  c.total_steps = 20;
  c.checkpoint_interval = 5;
  auto r = finetune("base", "t", "v", c, {}, dir / "run", trainer);
  CHECK(r.step == 20);
  CHECK(r.val_loss == doctest::Approx(0.05));

  testing::write_file(dir / "broken.py", "import sys\nsys.exit(3)\n");
  ScriptTrainer broken((dir / "broken.py").string());
  CHECK_THROWS_AS(finetune("base", "t", "v", c, {}, dir / "run2", broken), Error);
}

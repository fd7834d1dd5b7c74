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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlifaith/instance.hpp"

namespace nlifaith::adaptation {

// ---------------------------------------------------------------------------
// Dialogue phrases

enum class PhraseCategory { kIntroductory, kHedging, kSentiment };

std::string_view to_string(PhraseCategory category);
PhraseCategory parse_phrase_category(std::string_view text);

struct Phrase {
  std::string text;
  PhraseCategory category;

  friend bool operator==(const Phrase&, const Phrase&) = default;
};

// Ordered, nonempty set of unique phrases.
class PhraseSet {
 public:
  // Throws UsageError if `entries` is empty, has duplicates or empty text.
  explicit PhraseSet(std::vector<Phrase> entries);

  // The ten curated dialogue phrases: three introductory statements, five
  // hedges, two sentiment statements.
  static PhraseSet default_set();

  // Text format: "[introductory]" / "[hedging]" / "[sentiment]" headers,
  // one phrase per line below them; blank lines and '#' comments ignored.
  static PhraseSet parse(std::string_view text);
  static PhraseSet load(const std::filesystem::path& path);
  std::string serialize() const;

  const std::vector<Phrase>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const Phrase& operator[](std::size_t i) const { return entries_[i]; }

  friend bool operator==(const PhraseSet&, const PhraseSet&) = default;

 private:
  std::vector<Phrase> entries_;
};

// ---------------------------------------------------------------------------
// Augmentation

// Prepends `phrase` and one space to the hypothesis; the label is kept and
// the uid becomes "<uid>#aug". Throws UsageError on an empty phrase or an
// already augmented instance.
NLIInstance augment_instance(const NLIInstance& inst, std::string_view phrase);

// Inverse of augment_instance. Throws UsageError if `inst` is not augmented.
NLIInstance strip_augmentation(const NLIInstance& inst);

// Index of the phrase drawn for instance `index` under `seed`. Each instance
// draws independently and uniformly, so the draw does not depend on the
// other instances in the corpus.
std::size_t phrase_choice(std::uint64_t seed, std::size_t index, std::size_t n_phrases);

// The input corpus, unchanged, followed by one augmented copy of each
// instance in the same order.
std::vector<NLIInstance> build_augmented_corpus(std::span<const NLIInstance> corpus,
                                                const PhraseSet& phrases,
                                                std::uint64_t seed);

// Uniform sample of m phrases without replacement; the result keeps the
// order of `phrases`, so m == size() returns the set unchanged.
PhraseSet sample_phrase_subset(const PhraseSet& phrases, std::size_t m, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Phrase-subset robustness

struct RobustnessManifest {
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> phrases;
  std::filesystem::path output_path;
  std::string content_sha256;
  std::size_t instances = 0;
};

std::string manifest_to_json(const RobustnessManifest& m);
RobustnessManifest manifest_from_json(std::string_view text);

// Repeat r uses seed + r both to pick its m-phrase subset and to build its
// corpus, written to out_dir/repeat_<r>/train.jsonl with a manifest.json
// beside it. I/O failures are rethrown with the repeat index.
std::vector<RobustnessManifest> run_robustness_protocol(std::span<const NLIInstance> corpus,
                                                        const PhraseSet& phrases,
                                                        const std::filesystem::path& out_dir,
                                                        std::size_t repeats = 10,
                                                        std::size_t m = 5,
                                                        std::uint64_t seed = 0);

// Rebuilds the corpus described by a manifest from the source corpus and
// the full phrase set, and checks its hash. Returns true on a match.
bool replay_manifest(const RobustnessManifest& manifest, std::span<const NLIInstance> corpus,
                     const PhraseSet& phrases);

struct RunSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  double min = 0.0;
  double max = 0.0;
  std::size_t runs = 0;
};

// Per-corpus summary over repeats; each map is corpus_id -> AUC of one run.
std::map<std::string, RunSummary> summarize_runs(
    std::span<const std::map<std::string, double>> runs);

// ---------------------------------------------------------------------------
// Fine-tuning

struct TrainConfig {
  double warmup_ratio = 0.06;
  double weight_decay = 0.01;
  int effective_batch_size = 64;
  double learning_rate = 5e-6;
  int total_steps = 2000;
  int checkpoint_interval = 500;
  enum class Selection { kMinAugmentedValLoss } selection = Selection::kMinAugmentedValLoss;
  std::uint64_t seed = 0;

  // Throws UsageError unless every field is positive (total_steps may be 0
  // for a no-op run) and checkpoint_interval divides total_steps.
  void validate() const;
};

// Learning rates tried during model selection, as reported.
inline constexpr double kReportedLearningRates[] = {5e-6, 5e-2, 5e-1};

struct CheckpointEval {
  int step = 0;
  std::string checkpoint;
  double val_loss = 0.0;
};

struct TrainRequest {
  std::string base_checkpoint;
  std::filesystem::path train_path;
  std::filesystem::path val_path;
  std::filesystem::path output_dir;
  TrainConfig config;
};

// Runs one training job and reports every saved checkpoint with its
// validation loss.
class Trainer {
 public:
  virtual ~Trainer() = default;
  virtual std::vector<CheckpointEval> train(const TrainRequest& request) = 0;
};

// Drives tools/finetune_nli.py: writes the request as JSON, runs the script,
// reads the per-checkpoint losses it writes back.
class ScriptTrainer final : public Trainer {
 public:
  explicit ScriptTrainer(std::string script = {}, std::string python = "python3");
  std::vector<CheckpointEval> train(const TrainRequest& request) override;

 private:
  std::string script_;
  std::string python_;
};

struct FinetuneResult {
  std::string checkpoint;
  double val_loss = 0.0;
  double learning_rate = 0.0;
  int step = 0;
  std::filesystem::path metadata_path;
};

// Trains once per learning rate and returns the checkpoint with the lowest
// validation loss across all runs. With total_steps == 0 nothing is trained
// and the input checkpoint is returned. Run metadata (config, seeds, all
// losses) goes to output_dir/finetune_run.json. Throws DivergenceError on a
// non-finite loss.
FinetuneResult finetune(const std::string& model_checkpoint,
                        const std::filesystem::path& train_corpus,
                        const std::filesystem::path& val_corpus,
                        const TrainConfig& cfg, std::span<const double> learning_rates,
                        const std::filesystem::path& output_dir, Trainer& trainer);

}  // namespace nlifaith::adaptation

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

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlifaith/instance.hpp"
#include "nlifaith/nli_scoring.hpp"

namespace nlifaith {
class Backend;
}

namespace nlifaith::io {

// ---------------------------------------------------------------------------
// Faithfulness corpora

// Column names and label normalization for one corpus file. TRUE releases
// differ in column naming and label encoding, so this is data, not code.
struct LoaderConfig {
  std::string grounding_column = "grounding";
  std::string generation_column = "generated_text";
  std::string label_column = "label";
  std::optional<std::string> model_column;
  // Raw label strings (compared case-insensitively after trimming).
  std::set<std::string> faithful_labels = {"1", "1.0"};
  std::set<std::string> unfaithful_labels = {"0", "0.0"};
  // When set, any label outside faithful_labels counts as unfaithful.
  bool other_labels_unfaithful = false;
  // Optional row filter: keep rows whose filter_column equals filter_value.
  std::optional<std::string> filter_column;
  std::optional<std::string> filter_value;
  char delimiter = ',';

  static LoaderConfig true_default();
  // BEGIN-v2 TSV: keeps the generator model and maps "fully attributable"
  // to faithful, everything else to unfaithful.
  static LoaderConfig begin_v2();
};

// Per-corpus loader configs keyed by corpus id; unknown ids fall back to
// true_default(), except "begin_v2".
LoaderConfig loader_config_for(std::string_view corpus_id);
// Reads overrides from a JSON object {corpus_id: {field: value, ...}}.
std::map<std::string, LoaderConfig> read_loader_configs(const std::filesystem::path& path);

// Throws SchemaError (empty file, missing column) or ValidationError
// (label outside the normalization table, empty text), naming the row.
std::vector<FaithfulnessInstance> load_true_corpus(const std::filesystem::path& path,
                                                   std::string_view corpus_id,
                                                   const LoaderConfig& cfg);
std::vector<FaithfulnessInstance> load_true_corpus(const std::filesystem::path& path,
                                                   std::string_view corpus_id);
void write_true_corpus(const std::filesystem::path& path,
                       std::span<const FaithfulnessInstance> instances);

CorpusStats corpus_stats(std::span<const FaithfulnessInstance> instances);

// The nine corpora averaged in TRUE evaluation, in table order.
const std::vector<std::string>& default_evaluation_corpora();
// Fact-checking corpora (FEVER, VitaminC) overlap the base model's training
// data and are left out unless explicitly requested.
bool is_fact_checking(std::string_view corpus_id);
// Published class counts of the released TRUE files.
const std::vector<CorpusStats>& reference_stats();
std::optional<CorpusStats> reference_stats_for(std::string_view corpus_id);

// ---------------------------------------------------------------------------
// NLI corpora (JSON lines)

// Reads either the native format {uid, premise, hypothesis, label,
// source_round, augmented, phrase_used} or ANLI's {uid, context, hypothesis,
// label: e|n|c}. `source_round` fills in missing rounds.
std::vector<adaptation::NLIInstance> read_nli_jsonl(
    const std::filesystem::path& path,
    std::optional<std::string> source_round = std::nullopt);
void write_nli_jsonl(const std::filesystem::path& path,
                     std::span<const adaptation::NLIInstance> corpus);
std::string nli_to_json_line(const adaptation::NLIInstance& inst);

// ---------------------------------------------------------------------------
// Score files: CSV with header uid,corpus,metric,score.

struct ScoreRow {
  std::string uid;
  std::string corpus;
  std::string metric;
  double score = 0.0;

  friend bool operator==(const ScoreRow&, const ScoreRow&) = default;
};

void write_score_csv(const std::filesystem::path& path, std::span<const ScoreRow> rows);
std::vector<ScoreRow> read_score_csv(const std::filesystem::path& path);

std::vector<ScoreRow> to_score_rows(std::span<const FaithfulnessInstance> instances,
                                    std::span<const scoring::ScoreRecord> records);

// Full records (per-sample probabilities, truncation flag) as JSON lines.
std::string record_to_json_line(const scoring::ScoreRecord& rec);
scoring::ScoreRecord record_from_json_line(std::string_view line);
void write_records_jsonl(const std::filesystem::path& path,
                         std::span<const scoring::ScoreRecord> records);
std::vector<scoring::ScoreRecord> read_records_jsonl(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Score cache

struct CacheKey {
  std::string checkpoint;
  std::string config_digest;
  std::string corpus_id;

  // File name derived from the key; distinct keys give distinct names.
  std::string file_name() const;
};

// A directory of append-only JSON-lines files, one per key. The first line
// of each file is a header repeating the key. Updates take an exclusive
// lock and replace the file by rename, so readers never see a partial file.
class ScoreCache {
 public:
  explicit ScoreCache(std::filesystem::path dir);

  // Records by uid. A corrupt or mismatching file yields an empty map and a
  // warning; the next store() rewrites it from scratch.
  std::map<std::string, scoring::ScoreRecord> load(const CacheKey& key);
  // Merges `records` (error records are skipped) into the file for `key`.
  void store(const CacheKey& key, std::span<const scoring::ScoreRecord> records);

  const std::filesystem::path& dir() const { return dir_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  // Held for the duration of a get-or-score run against one key.
  class Lock {
   public:
    Lock(const ScoreCache& cache, const CacheKey& key);
    ~Lock();
    Lock(const Lock&) = delete;
    Lock& operator=(const Lock&) = delete;

   private:
    int fd_ = -1;
  };

 private:
  std::filesystem::path path_for(const CacheKey& key) const;
  std::map<std::string, scoring::ScoreRecord> read_file(const CacheKey& key,
                                                        bool& corrupt) const;
  void warn(std::string message);

  std::filesystem::path dir_;
  std::vector<std::string> warnings_;
};

// Scores only the instances whose uid is not cached for (backend, cfg,
// corpus); returns records in input order.
std::vector<scoring::ScoreRecord> cache_get_or_score(
    std::span<const FaithfulnessInstance> instances,
    const scoring::MetricConfig& cfg, Backend& backend, ScoreCache& cache,
    std::string_view metric_id = {});

}  // namespace nlifaith::io

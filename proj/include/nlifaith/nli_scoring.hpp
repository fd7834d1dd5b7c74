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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlifaith/instance.hpp"

namespace nlifaith {
class Backend;
}

namespace nlifaith::scoring {

// Three-way NLI class distribution for one premise/hypothesis pair.
struct NLIProbs {
  double entailment = 0.0;
  double neutral = 0.0;
  double contradiction = 0.0;

  friend bool operator==(const NLIProbs&, const NLIProbs&) = default;
};

inline constexpr double kProbSumTolerance = 1e-6;

bool is_valid(const NLIProbs& p);
// Throws ValidationError naming `context` if p is not a distribution.
void validate(const NLIProbs& p, std::string_view context);

enum class ScoreMode { kEntailmentOnly, kEntailmentMinusContradiction };

std::string_view to_string(ScoreMode mode);
// Accepts "e" / "entailment" and "e-c" / "e_minus_c".
ScoreMode parse_score_mode(std::string_view text);

struct MetricConfig {
  ScoreMode mode = ScoreMode::kEntailmentMinusContradiction;
  bool mc_enabled = true;
  int k = 15;
  std::uint64_t base_seed = 0;
  int batch_size = 32;
  int max_premise_tokens = 512;

  // Throws UsageError on k < 1, batch_size < 1, max_premise_tokens < 1.
  void validate() const;
  // Number of stochastic forward passes per instance.
  int samples_per_instance() const { return mc_enabled ? k : 1; }
  // Hex digest over every field that influences scores. batch_size is
  // excluded since scores do not depend on it; k is excluded when MC is off.
  std::string digest() const;
  // Short identifier such as "e-c+mc15" or "e".
  std::string default_metric_id() const;
};

struct ScoreRecord {
  std::string instance_uid;
  std::string metric_id;
  double score = 0.0;
  std::vector<NLIProbs> prob_samples;
  bool truncated = false;
  // Set when the backend failed for this instance; score is then NaN.
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
};

double e_minus_c(const NLIProbs& p);
double apply_mode(const NLIProbs& p, ScoreMode mode);

// Componentwise arithmetic mean. Throws UsageError on an empty list.
NLIProbs mc_aggregate(std::span<const NLIProbs> samples);

struct TruncatedText {
  std::string text;
  bool truncated = false;
};

// Keeps the first `max_tokens` whitespace-delimited tokens of `text`,
// preserving the original spacing of the kept prefix.
TruncatedText truncate_tail(std::string_view text, int max_tokens);

ScoreRecord score_pair(std::string_view grounding, std::string_view generation,
                       const MetricConfig& cfg, Backend& backend,
                       std::string_view uid = {},
                       std::string_view metric_id = {});

// Scores every instance; records come back in input order. Backend failures
// are isolated to the affected instances, which receive error records.
std::vector<ScoreRecord> score_dataset(
    std::span<const io::FaithfulnessInstance> instances,
    const MetricConfig& cfg, Backend& backend,
    std::string_view metric_id = {});

}  // namespace nlifaith::scoring

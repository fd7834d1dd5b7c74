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

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nlifaith::io {

// One grounded generation with a binary faithfulness judgement.
// gold_label is 1 for faithful, 0 for unfaithful.
struct FaithfulnessInstance {
  std::string uid;
  std::string corpus_id;
  std::string grounding;
  std::string generation;
  int gold_label = 0;
  std::optional<std::string> generator_model;
};

struct CorpusStats {
  std::string corpus_id;
  std::size_t n_faithful = 0;
  std::size_t n_unfaithful = 0;
  std::size_t total = 0;

  double faithful_percent() const;
  double unfaithful_percent() const;
};

// Stable uid for row `row` of `corpus_id`: "<corpus_id>-<row, 6 digits>".
std::string make_uid(std::string_view corpus_id, std::size_t row);

}  // namespace nlifaith::io

namespace nlifaith::adaptation {

enum class NliLabel { kEntailment, kNeutral, kContradiction };

std::string_view to_string(NliLabel label);
// Accepts full names and the single-letter ANLI codes e / n / c.
NliLabel parse_nli_label(std::string_view text);

// A premise/hypothesis training pair. When `augmented` is set the
// hypothesis starts with `phrase_used` followed by one space.
struct NLIInstance {
  std::string uid;
  std::string premise;
  std::string hypothesis;
  NliLabel label = NliLabel::kNeutral;
  std::optional<std::string> source_round;
  bool augmented = false;
  std::optional<std::string> phrase_used;

  friend bool operator==(const NLIInstance&, const NLIInstance&) = default;
};

}  // namespace nlifaith::adaptation

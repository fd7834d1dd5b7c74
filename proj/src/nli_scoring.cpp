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

#include "nlifaith/nli_scoring.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "nlifaith/backend.hpp"
#include "nlifaith/errors.hpp"
#include "nlifaith/random.hpp"

namespace nlifaith::scoring {

namespace {

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

ScoreRecord error_record(std::string_view uid, std::string_view metric_id,
                         std::string message) {
  ScoreRecord rec;
  rec.instance_uid = std::string(uid);
  rec.metric_id = std::string(metric_id);
  rec.score = std::numeric_limits<double>::quiet_NaN();
  rec.error = std::move(message);
  return rec;
}

ScoreRecord finish_record(std::string_view uid, std::string_view metric_id,
                          const MetricConfig& cfg,
                          std::vector<NLIProbs> samples, bool truncated) {
  ScoreRecord rec;
  rec.instance_uid = std::string(uid);
  rec.metric_id = std::string(metric_id);
  rec.score = apply_mode(mc_aggregate(samples), cfg.mode);
  rec.prob_samples = std::move(samples);
  rec.truncated = truncated;
  return rec;
}

}  // namespace

bool is_valid(const NLIProbs& p) {
  return in_unit(p.entailment) && in_unit(p.neutral) &&
         in_unit(p.contradiction) &&
         std::abs(p.entailment + p.neutral + p.contradiction - 1.0) <=
             kProbSumTolerance;
}

void validate(const NLIProbs& p, std::string_view context) {
  if (!is_valid(p)) {
    std::ostringstream os;
    os.precision(17);
    os << "invalid probability vector (" << p.entailment << ", " << p.neutral
       << ", " << p.contradiction << ") from " << context;
    throw ValidationError(os.str());
  }
}

std::string_view to_string(ScoreMode mode) {
  return mode == ScoreMode::kEntailmentOnly ? "e" : "e-c";
}

ScoreMode parse_score_mode(std::string_view text) {
  if (text == "e" || text == "entailment") return ScoreMode::kEntailmentOnly;
  if (text == "e-c" || text == "e_minus_c")
    return ScoreMode::kEntailmentMinusContradiction;
  throw UsageError("unknown score mode '" + std::string(text) +
                   "' (expected e or e-c)");
}

void MetricConfig::validate() const {
  if (k < 1) throw UsageError("k must be >= 1");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (max_premise_tokens < 1)
    throw UsageError("max_premise_tokens must be >= 1");
}

std::string MetricConfig::digest() const {
  std::ostringstream canon;
  canon << "mode=" << to_string(mode) << ";mc=" << (mc_enabled ? 1 : 0);
  if (mc_enabled) canon << ";k=" << k;
  canon << ";seed=" << base_seed << ";max_premise_tokens="
        << max_premise_tokens;
  return hex64(hash_string(canon.str()));
}

std::string MetricConfig::default_metric_id() const {
  std::string id(to_string(mode));
  if (mc_enabled) id += "+mc" + std::to_string(k);
  return id;
}

double e_minus_c(const NLIProbs& p) { return p.entailment - p.contradiction; }

double apply_mode(const NLIProbs& p, ScoreMode mode) {
  return mode == ScoreMode::kEntailmentOnly ? p.entailment : e_minus_c(p);
}

NLIProbs mc_aggregate(std::span<const NLIProbs> samples) {
  if (samples.empty()) throw UsageError("mc_aggregate needs at least one sample");
  for (const auto& s : samples) validate(s, "mc_aggregate input");
  // Incremental mean: exact when all samples are equal.
  NLIProbs mean = samples.front();
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double w = 1.0 / static_cast<double>(i + 1);
    mean.entailment += (samples[i].entailment - mean.entailment) * w;
    mean.neutral += (samples[i].neutral - mean.neutral) * w;
    mean.contradiction += (samples[i].contradiction - mean.contradiction) * w;
  }
  return mean;
}

TruncatedText truncate_tail(std::string_view text, int max_tokens) {
  auto is_space = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
  };
  int tokens = 0;
  std::size_t i = 0;
  std::size_t end_of_kept = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) break;
    if (tokens == max_tokens) return {std::string(text.substr(0, end_of_kept)), true};
    while (i < text.size() && !is_space(text[i])) ++i;
    ++tokens;
    end_of_kept = i;
  }
  return {std::string(text), false};
}

ScoreRecord score_pair(std::string_view grounding, std::string_view generation,
                       const MetricConfig& cfg, Backend& backend,
                       std::string_view uid, std::string_view metric_id) {
  cfg.validate();
  if (generation.empty())
    throw ValidationError("empty generation for instance '" + std::string(uid) +
                          "'");
  const std::string id =
      metric_id.empty() ? cfg.default_metric_id() : std::string(metric_id);
  auto premise = truncate_tail(grounding, cfg.max_premise_tokens);

  const int n = cfg.samples_per_instance();
  std::vector<TextPair> pairs(n, TextPair{premise.text, std::string(generation)});
  std::vector<std::uint64_t> seeds(n);
  for (int i = 0; i < n; ++i) seeds[i] = cfg.base_seed + static_cast<std::uint64_t>(i);

  std::vector<NLIProbs> samples;
  try {
    samples = backend.classify(pairs, cfg.mc_enabled, seeds);
  } catch (const TransportError& e) {
    throw TransportError("instance '" + std::string(uid) + "': " + e.what(),
                         e.retries());
  } catch (const ValidationError& e) {
    throw ValidationError("instance '" + std::string(uid) + "': " + e.what());
  }
  return finish_record(uid, id, cfg, std::move(samples), premise.truncated);
}

std::vector<ScoreRecord> score_dataset(
    std::span<const io::FaithfulnessInstance> instances,
    const MetricConfig& cfg, Backend& backend, std::string_view metric_id) {
  cfg.validate();
  if (instances.empty()) throw UsageError("score_dataset: no instances");
  const std::string id =
      metric_id.empty() ? cfg.default_metric_id() : std::string(metric_id);
  const std::size_t per = static_cast<std::size_t>(cfg.samples_per_instance());

  // Flatten into (instance, sample) work items so a batch can straddle
  // instances. Each item carries its own seed, so results do not depend on
  // how items are grouped.
  struct Item {
    std::size_t instance;
    std::uint64_t seed;
  };
  std::vector<TextPair> pairs;
  std::vector<Item> items;
  std::vector<bool> truncated(instances.size(), false);
  std::vector<std::optional<std::string>> failure(instances.size());
  pairs.reserve(instances.size() * per);
  items.reserve(instances.size() * per);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    if (inst.generation.empty()) {
      failure[i] = "empty generation";
      continue;
    }
    auto premise = truncate_tail(inst.grounding, cfg.max_premise_tokens);
    truncated[i] = premise.truncated;
    for (std::size_t s = 0; s < per; ++s) {
      pairs.push_back({premise.text, inst.generation});
      items.push_back({i, cfg.base_seed + s});
    }
  }

  std::vector<NLIProbs> probs(pairs.size());
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < pairs.size(); start += batch) {
    const std::size_t len = std::min(batch, pairs.size() - start);
    std::vector<std::uint64_t> seeds(len);
    for (std::size_t j = 0; j < len; ++j) seeds[j] = items[start + j].seed;
    try {
      auto out = backend.classify(
          std::span<const TextPair>(pairs).subspan(start, len), cfg.mc_enabled,
          seeds);
      std::copy(out.begin(), out.end(), probs.begin() + start);
    } catch (const Error&) {
      // Retry item by item so one bad instance does not sink its batch.
      for (std::size_t j = start; j < start + len; ++j) {
        const std::size_t inst = items[j].instance;
        if (failure[inst]) continue;
        try {
          probs[j] = backend.classify(std::span<const TextPair>(pairs).subspan(j, 1),
                                      cfg.mc_enabled, items[j].seed)[0];
        } catch (const Error& e) {
          failure[inst] = e.what();
        }
      }
    }
  }

  std::vector<ScoreRecord> records;
  records.reserve(instances.size());
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& uid = instances[i].uid;
    if (instances[i].generation.empty()) {
      records.push_back(error_record(uid, id, "instance '" + uid + "': " + *failure[i]));
      continue;
    }
    if (failure[i]) {
      records.push_back(error_record(uid, id, "instance '" + uid + "': " + *failure[i]));
    } else {
      records.push_back(finish_record(
          uid, id, cfg,
          std::vector<NLIProbs>(probs.begin() + cursor, probs.begin() + cursor + per),
          truncated[i]));
    }
    cursor += per;
  }
  return records;
}

}  // namespace nlifaith::scoring

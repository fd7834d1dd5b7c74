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

#include "nlifaith/backend.hpp"

#include <cmath>
#include <numbers>

#include "nlifaith/errors.hpp"
#include "nlifaith/random.hpp"

#include <json.hpp>

namespace nlifaith {

using scoring::NLIProbs;

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kLocalModel:
      return "local";
    case BackendKind::kRemoteHttp:
      return "http";
    case BackendKind::kMock:
      return "mock";
  }
  return "unknown";
}

BackendKind parse_backend_kind(std::string_view text) {
  if (text == "local") return BackendKind::kLocalModel;
  if (text == "http") return BackendKind::kRemoteHttp;
  if (text == "mock") return BackendKind::kMock;
  throw UsageError("unknown backend '" + std::string(text) +
                   "' (expected local, http or mock)");
}

std::vector<NLIProbs> Backend::classify(std::span<const TextPair> pairs,
                                        bool dropout_on,
                                        std::span<const std::uint64_t> seeds) {
  if (pairs.empty()) throw UsageError("classify: no pairs");
  std::vector<std::uint64_t> expanded;
  if (seeds.size() == 1 && pairs.size() > 1) {
    expanded.assign(pairs.size(), seeds[0]);
    seeds = expanded;
  } else if (seeds.size() != pairs.size()) {
    throw UsageError("classify: expected 1 or " + std::to_string(pairs.size()) +
                     " seeds, got " + std::to_string(seeds.size()));
  }
  auto out = do_classify(pairs, dropout_on, seeds);
  if (out.size() != pairs.size()) {
    throw ValidationError("backend returned " + std::to_string(out.size()) +
                          " distributions for " + std::to_string(pairs.size()) +
                          " pairs");
  }
  for (const auto& p : out) scoring::validate(p, to_string(kind()));
  calls_.fetch_add(pairs.size());
  return out;
}

std::vector<NLIProbs> Backend::classify(std::span<const TextPair> pairs,
                                        bool dropout_on, std::uint64_t seed) {
  const std::uint64_t one[1] = {seed};
  return classify(pairs, dropout_on, std::span<const std::uint64_t>(one));
}

// ---------------------------------------------------------------------------
// MockBackend

NLIProbs MockBackend::classify_one(std::string_view premise,
                                   std::string_view hypothesis,
                                   bool dropout_on, std::uint64_t seed) const {
  const std::uint64_t key =
      hash_combine(hash_string(premise), hash_string(hypothesis));
  std::array<double, 3> logits{};
  if (options_.logits) {
    logits = options_.logits(premise, hypothesis);
  } else {
    CounterRng clean(key, 0);
    for (auto& l : logits) l = 4.0 * (clean.uniform() - 0.5);
  }
  if (dropout_on && options_.dropout_noise != 0.0) {
    CounterRng noise(hash_combine(key, seed), 1);
    double z[4];
    for (int i = 0; i < 2; ++i) {
      const double u1 = noise.uniform();
      const double u2 = noise.uniform();
      const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
      z[2 * i] = r * std::cos(2.0 * std::numbers::pi * u2);
      z[2 * i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
    }
    for (int j = 0; j < 3; ++j) logits[j] += options_.dropout_noise * z[j];
  }
  const double top = std::max({logits[0], logits[1], logits[2]});
  double ex[3];
  double sum = 0.0;
  for (int j = 0; j < 3; ++j) {
    ex[j] = std::exp(logits[j] - top);
    sum += ex[j];
  }
  return {ex[0] / sum, ex[1] / sum, ex[2] / sum};
}

std::vector<NLIProbs> MockBackend::do_classify(
    std::span<const TextPair> pairs, bool dropout_on,
    std::span<const std::uint64_t> seeds) {
  std::vector<NLIProbs> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!options_.fail_marker.empty() &&
        pairs[i].premise.find(options_.fail_marker) != std::string::npos) {
      throw TransportError("mock backend: injected failure", 0);
    }
    out.push_back(
        classify_one(pairs[i].premise, pairs[i].hypothesis, dropout_on, seeds[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wire format

std::string encode_classify_request(std::span<const TextPair> pairs,
                                    bool dropout_on,
                                    std::span<const std::uint64_t> seeds) {
  nlohmann::json req;
  auto& jp = req["pairs"] = nlohmann::json::array();
  for (const auto& p : pairs) jp.push_back({p.premise, p.hypothesis});
  req["dropout"] = dropout_on;
  req["seeds"] = std::vector<std::uint64_t>(seeds.begin(), seeds.end());
  return req.dump();
}

std::vector<NLIProbs> decode_classify_response(std::string_view body,
                                               std::size_t expected) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed backend response: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("probs") || !doc["probs"].is_array())
    throw ValidationError("malformed backend response: missing 'probs' array");
  const auto& probs = doc["probs"];
  if (probs.size() != expected) {
    throw ValidationError("malformed backend response: " +
                          std::to_string(probs.size()) + " vectors for " +
                          std::to_string(expected) + " pairs");
  }
  std::vector<NLIProbs> out;
  out.reserve(expected);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto& v = probs[i];
    if (!v.is_array() || v.size() != 3 || !v[0].is_number() ||
        !v[1].is_number() || !v[2].is_number()) {
      throw ValidationError("malformed probability vector at index " +
                            std::to_string(i) + ": " + v.dump());
    }
    NLIProbs p{v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
    scoring::validate(p, "remote response index " + std::to_string(i));
    out.push_back(p);
  }
  return out;
}

}  // namespace nlifaith

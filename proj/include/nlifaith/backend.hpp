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

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlifaith/nli_scoring.hpp"

namespace nlifaith {

enum class BackendKind { kLocalModel, kRemoteHttp, kMock };

std::string_view to_string(BackendKind kind);

struct TextPair {
  std::string premise;
  std::string hypothesis;
};

// An NLI classifier. classify() is the only entry point; it validates the
// request and the returned distributions and keeps the call counter.
//
// The counter counts model calls in the per-instance sense: one classified
// pair is one call, whether it travels alone or inside a batch. This keeps
// the count independent of batch_size.
class Backend {
 public:
  virtual ~Backend() = default;

  // `seeds` holds one seed shared by all pairs or one seed per pair.
  // With dropout off the seeds are ignored.
  std::vector<scoring::NLIProbs> classify(std::span<const TextPair> pairs,
                                          bool dropout_on,
                                          std::span<const std::uint64_t> seeds);
  std::vector<scoring::NLIProbs> classify(std::span<const TextPair> pairs,
                                          bool dropout_on, std::uint64_t seed);

  virtual BackendKind kind() const = 0;
  virtual std::string checkpoint_or_endpoint() const = 0;

  std::uint64_t call_counter() const { return calls_.load(); }

 protected:
  // `seeds` always has exactly pairs.size() entries here.
  virtual std::vector<scoring::NLIProbs> do_classify(
      std::span<const TextPair> pairs, bool dropout_on,
      std::span<const std::uint64_t> seeds) = 0;

 private:
  std::atomic<std::uint64_t> calls_{0};
};

// Deterministic stand-in for a real classifier.
//
// For a pair (p, h) let key = hash_combine(hash_string(p), hash_string(h)).
// Clean logits come from options.logits(p, h) when set, otherwise
// logit_j = 4 * (u_j - 0.5) where u_j is draw j of CounterRng(key, 0).
// With dropout on, logit_j += dropout_noise * z_j where z_0..z_2 are
// Box-Muller normals built from draws of CounterRng(hash_combine(key, seed), 1)
// (pairs of uniforms (u1, u2) -> sqrt(-2 ln(1 - u1)) * cos(2 pi u2), and the
// matching sin term for the next normal). Output is softmax(logits).
class MockBackend : public Backend {
 public:
  using LogitFn =
      std::function<std::array<double, 3>(std::string_view, std::string_view)>;

  struct Options {
    double dropout_noise = 0.5;
    LogitFn logits;
    // Calls whose premise contains this marker throw TransportError.
    // Used to exercise partial-failure handling.
    std::string fail_marker;
  };

  MockBackend() = default;
  explicit MockBackend(Options options) : options_(std::move(options)) {}

  BackendKind kind() const override { return BackendKind::kMock; }
  std::string checkpoint_or_endpoint() const override { return "mock"; }

  scoring::NLIProbs classify_one(std::string_view premise,
                                 std::string_view hypothesis, bool dropout_on,
                                 std::uint64_t seed) const;

 protected:
  std::vector<scoring::NLIProbs> do_classify(
      std::span<const TextPair> pairs, bool dropout_on,
      std::span<const std::uint64_t> seeds) override;

 private:
  Options options_;
};

// JSON-over-HTTP classifier.
// Request:  {"pairs": [[premise, hypothesis], ...], "dropout": bool,
//            "seeds": [int, ...]}
// Response: {"probs": [[e, n, c], ...]}
class HttpBackend final : public Backend {
 public:
  struct Options {
    int max_retries = 3;
    std::chrono::milliseconds retry_backoff{200};
    std::chrono::seconds timeout{120};
  };

  explicit HttpBackend(std::string endpoint_url);
  HttpBackend(std::string endpoint_url, Options options);

  BackendKind kind() const override { return BackendKind::kRemoteHttp; }
  std::string checkpoint_or_endpoint() const override { return url_; }

 protected:
  std::vector<scoring::NLIProbs> do_classify(
      std::span<const TextPair> pairs, bool dropout_on,
      std::span<const std::uint64_t> seeds) override;

 private:
  std::string url_;
  std::string host_;
  std::string path_;
  int port_ = 80;
  Options options_;
};

// Runs a checkpoint in a long-lived worker process (tools/nli_worker.py)
// and speaks the HttpBackend protocol over its stdin/stdout, one JSON
// document per line.
class LocalModelBackend final : public Backend {
 public:
  struct Options {
    std::string python = "python3";
    // Defaults to the worker shipped in tools/.
    std::string worker_script;
    std::string device = "cpu";
  };

  explicit LocalModelBackend(std::string checkpoint);
  LocalModelBackend(std::string checkpoint, Options options);
  ~LocalModelBackend() override;

  LocalModelBackend(const LocalModelBackend&) = delete;
  LocalModelBackend& operator=(const LocalModelBackend&) = delete;

  BackendKind kind() const override { return BackendKind::kLocalModel; }
  std::string checkpoint_or_endpoint() const override { return checkpoint_; }

 protected:
  std::vector<scoring::NLIProbs> do_classify(
      std::span<const TextPair> pairs, bool dropout_on,
      std::span<const std::uint64_t> seeds) override;

 private:
  void start();
  void stop();

  std::string checkpoint_;
  Options options_;
  std::mutex mu_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string read_buffer_;
};

// Default checkpoint for LocalModelBackend: the multi-dataset DeBERTa-large
// NLI model (MNLI, Fever-NLI, ANLI, LingNLI, WANLI).
inline constexpr std::string_view kDefaultCheckpoint =
    "MoritzLaurer/DeBERTa-v3-large-mnli-fever-anli-ling-wanli";

// Shared protocol helpers, exposed for tests and for servers that want to
// speak the same wire format.
std::string encode_classify_request(std::span<const TextPair> pairs,
                                    bool dropout_on,
                                    std::span<const std::uint64_t> seeds);
// Throws ValidationError on a malformed body or probability vector.
std::vector<scoring::NLIProbs> decode_classify_response(std::string_view body,
                                                        std::size_t expected);

std::unique_ptr<Backend> make_backend(BackendKind kind,
                                      const std::string& target);
BackendKind parse_backend_kind(std::string_view text);

}  // namespace nlifaith

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

#include <thread>

#include "nlifaith/backend.hpp"
#include "nlifaith/errors.hpp"

#include <httplib.h>

namespace nlifaith {

namespace {

struct ParsedUrl {
  std::string host;
  int port = 80;
  std::string path = "/";
};

ParsedUrl parse_http_url(const std::string& url) {
  constexpr std::string_view kScheme = "http://";
  if (url.rfind(kScheme, 0) != 0)
    throw UsageError("endpoint must be an http:// URL: " + url);
  std::string rest = url.substr(kScheme.size());
  ParsedUrl out;
  const auto slash = rest.find('/');
  if (slash != std::string::npos) {
    out.path = rest.substr(slash);
    rest.resize(slash);
  }
  const auto colon = rest.rfind(':');
  if (colon != std::string::npos) {
    try {
      out.port = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw UsageError("bad port in endpoint URL: " + url);
    }
    rest.resize(colon);
  }
  if (rest.empty()) throw UsageError("missing host in endpoint URL: " + url);
  out.host = rest;
  return out;
}

}  // namespace

HttpBackend::HttpBackend(std::string endpoint_url)
    : HttpBackend(std::move(endpoint_url), Options{}) {}

HttpBackend::HttpBackend(std::string endpoint_url, Options options)
    : url_(std::move(endpoint_url)), options_(options) {
  auto parsed = parse_http_url(url_);
  host_ = parsed.host;
  port_ = parsed.port;
  path_ = parsed.path;
}

std::vector<scoring::NLIProbs> HttpBackend::do_classify(
    std::span<const TextPair> pairs, bool dropout_on,
    std::span<const std::uint64_t> seeds) {
  const std::string body = encode_classify_request(pairs, dropout_on, seeds);
  httplib::Client client(host_, port_);
  const auto secs = options_.timeout.count();
  client.set_connection_timeout(secs);
  client.set_read_timeout(secs);
  client.set_write_timeout(secs);

  std::string last_error;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options_.retry_backoff * attempt);
    auto res = client.Post(path_, body, "application/json");
    if (!res) {
      last_error = "cannot reach " + url_ + ": " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = url_ + " returned HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw ValidationError(url_ + " rejected request with HTTP " +
                            std::to_string(res->status) + ": " + res->body);
    }
    return decode_classify_response(res->body, pairs.size());
  }
  throw TransportError(last_error, options_.max_retries);
}

}  // namespace nlifaith

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

#include <atomic>
#include <cmath>
#include <numbers>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "nlifaith/backend.hpp"
#include "nlifaith/errors.hpp"
#include "nlifaith/random.hpp"

using namespace nlifaith;
using scoring::NLIProbs;

namespace {

// The mock's documented recipe, written out longhand.
NLIProbs mock_by_hand(const std::string& p, const std::string& h, bool dropout,
                      std::uint64_t seed, double noise_scale) {
  const std::uint64_t key = hash_combine(hash_string(p), hash_string(h));
  CounterRng clean(key, 0);
  double l[3];
  for (double& x : l) x = 4.0 * (clean.uniform() - 0.5);
  if (dropout) {
    CounterRng noise(hash_combine(key, seed), 1);
    double u[4];
    for (double& x : u) x = noise.uniform();
    const double r1 = std::sqrt(-2.0 * std::log(1.0 - u[0]));
    const double r2 = std::sqrt(-2.0 * std::log(1.0 - u[2]));
    l[0] += noise_scale * r1 * std::cos(2.0 * std::numbers::pi * u[1]);
    l[1] += noise_scale * r1 * std::sin(2.0 * std::numbers::pi * u[1]);
    l[2] += noise_scale * r2 * std::cos(2.0 * std::numbers::pi * u[3]);
  }
  const double m = std::max({l[0], l[1], l[2]});
  const double a = std::exp(l[0] - m), b = std::exp(l[1] - m), c = std::exp(l[2] - m);
  return {a / (a + b + c), b / (a + b + c), c / (a + b + c)};
}

class Server {
 public:
  explicit Server(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    svr_.Post(".*", [handler](const httplib::Request& req, httplib::Response& res) {
      handler(req, res);
    });
    port_ = svr_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { svr_.listen_after_bind(); });
    svr_.wait_until_ready();
  }
  ~Server() {
    svr_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/classify"; }

 private:
  httplib::Server svr_;
  int port_ = 0;
  std::thread thread_;
};

// Serves MockBackend answers over the wire protocol.
void serve_mock(const httplib::Request& req, httplib::Response& res) {
  static MockBackend mock;
  auto j = nlohmann::json::parse(req.body);
  nlohmann::json out;
  out["probs"] = nlohmann::json::array();
  const auto& pairs = j["pairs"];
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto p = mock.classify_one(pairs[i][0].get<std::string>(), pairs[i][1].get<std::string>(),
                               j["dropout"].get<bool>(), j["seeds"][i].get<std::uint64_t>());
    out["probs"].push_back({p.entailment, p.neutral, p.contradiction});
  }
  res.set_content(out.dump(), "application/json");
}

HttpBackend::Options fast_retries(int n) {
  HttpBackend::Options o;
  o.max_retries = n;
  o.retry_backoff = std::chrono::milliseconds(1);
  o.timeout = std::chrono::seconds(5);
  return o;
}

}  // namespace

TEST_CASE("mock backend follows its recipe") {
  MockBackend mock;
  for (int i = 0; i < 40; ++i) {
    const std::string p = "premise " + std::to_string(i), h = "hyp " + std::to_string(i * i);
    CHECK(mock.classify_one(p, h, false, 0) == mock_by_hand(p, h, false, 0, 0.5));
    for (std::uint64_t s : {0ULL, 1ULL, 99ULL}) {
      const auto got = mock.classify_one(p, h, true, s);
      const auto want = mock_by_hand(p, h, true, s, 0.5);
      CHECK(got.entailment == doctest::Approx(want.entailment).epsilon(1e-14));
      CHECK(got.neutral == doctest::Approx(want.neutral).epsilon(1e-14));
      CHECK(got.contradiction == doctest::Approx(want.contradiction).epsilon(1e-14));
    }
  }
}

TEST_CASE("mock backend is a pure function") {
  MockBackend a, b;
  CHECK(a.classify_one("x", "y", true, 3) == b.classify_one("x", "y", true, 3));
  CHECK(a.classify_one("x", "y", false, 3) == a.classify_one("x", "y", false, 4));
  CHECK_FALSE(a.classify_one("x", "y", true, 3) == a.classify_one("x", "y", true, 4));
  CHECK_FALSE(a.classify_one("x", "y", false, 0) == a.classify_one("y", "x", false, 0));
  CHECK(scoring::is_valid(a.classify_one("x", "y", true, 3)));
}

TEST_CASE("custom mock logits") {
  MockBackend::Options o;
  o.dropout_noise = 0.0;
  o.logits = [](std::string_view, std::string_view) { return std::array<double, 3>{0.0, 0.0, 0.0}; };
  MockBackend m(o);
  auto p = m.classify_one("a", "b", true, 1);
  CHECK(p.entailment == doctest::Approx(1.0 / 3));
  CHECK(p.contradiction == doctest::Approx(1.0 / 3));
}

TEST_CASE("classify argument checks and call counting") {
  MockBackend mock;
  std::vector<TextPair> pairs = {{"a", "b"}, {"c", "d"}, {"e", "f"}};
  std::vector<std::uint64_t> two = {1, 2};
  CHECK_THROWS_AS(mock.classify(pairs, true, two), UsageError);
  CHECK_THROWS_AS(mock.classify({}, true, std::uint64_t{0}), UsageError);
  CHECK(mock.call_counter() == 0);

  auto shared = mock.classify(pairs, true, std::uint64_t{5});
  std::vector<std::uint64_t> fives(3, 5);
  auto each = mock.classify(pairs, true, fives);
  CHECK(shared.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(shared[i] == each[i]);
  CHECK(mock.call_counter() == 6);

  MockBackend failing(MockBackend::Options{0.5, {}, "bad"});
  std::vector<TextPair> bad = {{"fine", "x"}, {"a bad one", "y"}};
  CHECK_THROWS_AS(failing.classify(bad, false, std::uint64_t{0}), TransportError);
  CHECK(failing.call_counter() == 0);
}

TEST_CASE("wire format") {
  std::vector<TextPair> pairs = {{"p \"quoted\"", "h\n2"}};
  std::vector<std::uint64_t> seeds = {18446744073709551615ULL};
  auto j = nlohmann::json::parse(encode_classify_request(pairs, true, seeds));
  CHECK(j["pairs"][0][0] == "p \"quoted\"");
  CHECK(j["pairs"][0][1] == "h\n2");
  CHECK(j["dropout"] == true);
  CHECK(j["seeds"][0].get<std::uint64_t>() == 18446744073709551615ULL);

  auto ok = decode_classify_response(R"({"probs": [[0.5, 0.25, 0.25]]})", 1);
  CHECK(ok[0] == NLIProbs{0.5, 0.25, 0.25});
  CHECK_THROWS_AS(decode_classify_response("not json", 1), ValidationError);
  CHECK_THROWS_AS(decode_classify_response(R"({"probs": []})", 1), ValidationError);
  CHECK_THROWS_AS(decode_classify_response(R"({"probs": [[0.5, 0.5]]})", 1), ValidationError);
  CHECK_THROWS_AS(decode_classify_response(R"({"p": 1})", 1), ValidationError);
}

TEST_CASE("backend kinds") {
  CHECK(parse_backend_kind("local") == BackendKind::kLocalModel);
  CHECK(parse_backend_kind("http") == BackendKind::kRemoteHttp);
  CHECK(parse_backend_kind("mock") == BackendKind::kMock);
  CHECK_THROWS_AS(parse_backend_kind("gpu"), UsageError);
  CHECK(make_backend(BackendKind::kMock, "")->kind() == BackendKind::kMock);
  CHECK_THROWS_AS(HttpBackend("ftp://host/x"), UsageError);
}

TEST_CASE("http backend against a local server") {
  Server server(serve_mock);
  HttpBackend http(server.url(), fast_retries(1));
  MockBackend local;
  std::vector<TextPair> pairs = {{"a b c", "d"}, {"e", "f g"}};
  std::vector<std::uint64_t> seeds = {7, 8};
  auto remote = http.classify(pairs, true, seeds);
  REQUIRE(remote.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto want = local.classify_one(pairs[i].premise, pairs[i].hypothesis, true, seeds[i]);
    CHECK(remote[i].entailment == doctest::Approx(want.entailment).epsilon(1e-15));
    CHECK(remote[i].contradiction == doctest::Approx(want.contradiction).epsilon(1e-15));
  }
  CHECK(http.call_counter() == 2);
}

TEST_CASE("http backend retries server errors") {
  std::atomic<int> hits{0};
  Server server([&](const httplib::Request& req, httplib::Response& res) {
    if (hits++ < 2) {
      res.status = 503;
      return;
    }
    serve_mock(req, res);
  });
  HttpBackend http(server.url(), fast_retries(3));
  std::vector<TextPair> pairs = {{"x", "y"}};
  CHECK(http.classify(pairs, false, std::uint64_t{0}).size() == 1);
  CHECK(hits == 3);
}

TEST_CASE("http backend gives up after its retries") {
  std::atomic<int> hits{0};
  Server server([&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 500;
  });
  HttpBackend http(server.url(), fast_retries(2));
  std::vector<TextPair> pairs = {{"x", "y"}};
  try {
    http.classify(pairs, false, std::uint64_t{0});
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.retries() == 2);
  }
  CHECK(hits == 3);
  CHECK(http.call_counter() == 0);
}

TEST_CASE("http backend rejects client errors and bad bodies") {
  Server bad_request([](const httplib::Request&, httplib::Response& res) {
    res.status = 422;
    res.set_content("nope", "text/plain");
  });
  HttpBackend a(bad_request.url(), fast_retries(3));
  std::vector<TextPair> pairs = {{"x", "y"}};
  CHECK_THROWS_AS(a.classify(pairs, false, std::uint64_t{0}), ValidationError);

  Server garbage([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"probs": [[0.9, 0.9, 0.9]]})", "application/json");
  });
  HttpBackend b(garbage.url(), fast_retries(0));
  CHECK_THROWS_AS(b.classify(pairs, false, std::uint64_t{0}), ValidationError);
}

TEST_CASE("unreachable endpoint is a transport error") {
  int port;
  {
    httplib::Server s;
    port = s.bind_to_any_port("127.0.0.1");
  }
  HttpBackend http("http://127.0.0.1:" + std::to_string(port) + "/", fast_retries(1));
  std::vector<TextPair> pairs = {{"x", "y"}};
  CHECK_THROWS_AS(http.classify(pairs, false, std::uint64_t{0}), TransportError);
}

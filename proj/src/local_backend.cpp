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

#include <csignal>
#include <cstdlib>
#include <cstring>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "nlifaith/backend.hpp"
#include "nlifaith/errors.hpp"

#ifndef NLIFAITH_TOOLS_DIR
#define NLIFAITH_TOOLS_DIR "tools"
#endif

namespace nlifaith {

namespace {

void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("write to NLI worker failed: ") +
                               std::strerror(errno),
                           0);
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace

LocalModelBackend::LocalModelBackend(std::string checkpoint)
    : LocalModelBackend(std::move(checkpoint), Options{}) {}

LocalModelBackend::LocalModelBackend(std::string checkpoint, Options options)
    : checkpoint_(std::move(checkpoint)), options_(std::move(options)) {
  if (options_.worker_script.empty()) {
    const char* env = std::getenv("NLIFAITH_WORKER");
    options_.worker_script =
        env ? env : std::string(NLIFAITH_TOOLS_DIR) + "/nli_worker.py";
  }
}

LocalModelBackend::~LocalModelBackend() { stop(); }

void LocalModelBackend::start() {
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0)
    throw TransportError("cannot create pipes for NLI worker", 0);
  const pid_t pid = ::fork();
  if (pid < 0) throw TransportError("cannot fork NLI worker", 0);
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    std::vector<std::string> args = {options_.python, options_.worker_script,
                                     "--checkpoint", checkpoint_,
                                     "--device", options_.device, "--stdio"};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    ::execvp(argv[0], argv.data());
    std::_Exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  std::signal(SIGPIPE, SIG_IGN);
}

void LocalModelBackend::stop() {
  if (pid_ < 0) return;
  ::close(to_child_);
  ::close(from_child_);
  int status = 0;
  ::waitpid(pid_, &status, 0);
  pid_ = -1;
  to_child_ = from_child_ = -1;
  read_buffer_.clear();
}

std::vector<scoring::NLIProbs> LocalModelBackend::do_classify(
    std::span<const TextPair> pairs, bool dropout_on,
    std::span<const std::uint64_t> seeds) {
  std::lock_guard lock(mu_);
  if (pid_ < 0) start();
  try {
    write_all(to_child_, encode_classify_request(pairs, dropout_on, seeds) + "\n");
    for (;;) {
      const auto nl = read_buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = read_buffer_.substr(0, nl);
        read_buffer_.erase(0, nl + 1);
        return decode_classify_response(line, pairs.size());
      }
      char buf[65536];
      const ssize_t n = ::read(from_child_, buf, sizeof(buf));
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw TransportError("NLI worker for '" + checkpoint_ + "' exited", 0);
      read_buffer_.append(buf, static_cast<std::size_t>(n));
    }
  } catch (const TransportError&) {
    stop();
    throw;
  }
}

std::unique_ptr<Backend> make_backend(BackendKind kind, const std::string& target) {
  switch (kind) {
    case BackendKind::kMock:
      return std::make_unique<MockBackend>();
    case BackendKind::kRemoteHttp:
      return std::make_unique<HttpBackend>(target);
    case BackendKind::kLocalModel:
      return std::make_unique<LocalModelBackend>(
          target.empty() ? std::string(kDefaultCheckpoint) : target);
  }
  throw UsageError("unknown backend kind");
}

}  // namespace nlifaith

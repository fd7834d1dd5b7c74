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
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "nlifaith/adaptation.hpp"
#include "nlifaith/backend.hpp"

namespace nlifaith::cli {

inline constexpr std::string_view kToolVersion = "0.3.0";

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
// Outputs were written but some instances could not be scored.
inline constexpr int kExitPartial = 3;

struct FileDigest {
  std::string path;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  std::vector<std::string> args;  // argv without the program name
  std::string config_json;        // resolved settings, canonical dump
  std::string config_digest;      // sha256 of config_json
  std::vector<FileDigest> inputs;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<FileDigest> outputs;
  std::string started_at;
  std::string finished_at;
  std::string tool_version;

  std::string to_json() const;
  static RunManifest from_json(std::string_view text);
  static RunManifest load(const std::filesystem::path& path);
};

// Problems found when re-hashing a manifest's config and files; empty when
// everything matches.
std::vector<std::string> verify_manifest(const RunManifest& m);

// Test seams. Unset members fall back to the real implementations.
struct Hooks {
  std::function<std::unique_ptr<Backend>(BackendKind, const std::string&)> make_backend;
  std::function<std::unique_ptr<adaptation::Trainer>()> make_trainer;
};

// argv-style entry point; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const Hooks& hooks = {});

}  // namespace nlifaith::cli

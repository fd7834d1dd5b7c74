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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nlifaith {

// Base for every error raised by the library. The CLI maps these to a
// nonzero exit code and prints what().
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a precondition (empty list, k < 1, m out of range, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Input data violates a domain invariant (non-binary label, probability
// vector that does not sum to one, empty generation).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A required column or field is missing, or the input file is empty.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Score columns do not cover the same instance uids.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// Statistic undefined for the input (single-class AUC input).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Correlation undefined because one variable is constant.
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

class UnsupportedCorpusError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Backend could not be reached after all retries.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int retries)
      : Error(what + " (after " + std::to_string(retries) + " retries)"),
        retries_(retries) {}
  int retries() const { return retries_; }

 private:
  int retries_;
};

}  // namespace nlifaith

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

// Minimal RFC 4180 reader/writer: quoted fields, doubled quotes, embedded
// separators and newlines. Used for TRUE corpora and score files.

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace nlifaith::csv {

using Row = std::vector<std::string>;

class Reader {
 public:
  explicit Reader(std::istream& in, char sep = ',') : in_(in), sep_(sep) {}

  // Reads the next record into `row`. Returns false at end of input.
  // Throws SchemaError on an unterminated quoted field.
  bool next(Row& row);
  // 1-based physical line on which the last record started.
  std::size_t line() const { return record_line_; }

 private:
  std::istream& in_;
  char sep_;
  std::size_t line_ = 1;
  std::size_t record_line_ = 0;
};

void write_row(std::ostream& out, const Row& row, char sep = ',');
std::string quote_if_needed(std::string_view field, char sep = ',');

// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace nlifaith::csv

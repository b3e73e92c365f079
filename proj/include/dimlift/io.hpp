// Copyright (c) 2026 The dimlift Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <vector>

#include "dimlift/matrix.hpp"

namespace dimlift {

/// Writes bytes to a temporary sibling file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

/// Shortest decimal with 17 significant digits ("%.17g").
std::string format_double(double v);

/// Matrix text format: first line "rows cols", then rows of numbers.
Matrix parse_matrix(const std::string& text);
Matrix read_matrix(const std::string& path);
std::string format_matrix(const Matrix& m);

inline constexpr const char* kCsvHeader = "# dimlift-csv v1";

/// CSV with the versioned header comment and a column-name line.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns);
  void row(const std::vector<std::string>& cells);
  std::string str() const;

 private:
  std::size_t ncols_;
  std::string body_;
};

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};
CsvTable parse_csv(const std::string& text);

}  // namespace dimlift

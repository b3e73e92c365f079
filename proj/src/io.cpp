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

#include "dimlift/io.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "dimlift/error.hpp"

namespace dimlift {

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIoError, "cannot open " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    require(static_cast<bool>(out), ErrorCode::kIoError, "write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    fail(ErrorCode::kIoError, "rename to " + path + " failed: " + ec.message());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

double parse_number(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const char* b = tok.data();
  const char* e = tok.data() + tok.size();
  if (!tok.empty() && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    if (tok == "inf") return HUGE_VAL;
    if (tok == "-inf") return -HUGE_VAL;
    fail(ErrorCode::kParseError,
         "line " + std::to_string(line) + ": bad number '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

Matrix parse_matrix(const std::string& text) {
  std::vector<std::string_view> lines;
  std::string_view rest(text);
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    lines.push_back(rest.substr(0, nl));
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  std::size_t li = 0;
  auto next_nonempty = [&]() -> std::vector<std::string_view> {
    while (li < lines.size()) {
      auto t = tokens(lines[li++]);
      if (!t.empty() && t[0].front() != '#') return t;
    }
    return {};
  };
  const auto head = next_nonempty();
  require(head.size() == 2, ErrorCode::kParseError, "matrix: first line must be 'rows cols'");
  const double r = parse_number(head[0], li), c = parse_number(head[1], li);
  require(r >= 0 && c >= 0 && r == std::floor(r) && c == std::floor(c) && r * c < 1e9,
          ErrorCode::kParseError, "matrix: bad dimensions");
  Matrix m(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto t = next_nonempty();
    require(t.size() == m.cols(), ErrorCode::kParseError,
            "matrix: row " + std::to_string(i) + " has " + std::to_string(t.size()) +
                " entries, expected " + std::to_string(m.cols()));
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = parse_number(t[j], li);
  }
  require(next_nonempty().empty(), ErrorCode::kParseError, "matrix: trailing data");
  return m;
}

Matrix read_matrix(const std::string& path) { return parse_matrix(read_file(path)); }

std::string format_matrix(const Matrix& m) {
  std::string s = std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) s += ' ';
      s += format_double(m(i, j));
    }
    s += '\n';
  }
  return s;
}

CsvWriter::CsvWriter(std::vector<std::string> columns) : ncols_(columns.size()) {
  body_ = std::string(kCsvHeader) + "\n";
  row(columns);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  require(cells.size() == ncols_, ErrorCode::kInvalidInput, "csv: wrong cell count");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    require(cells[i].find_first_of(",\n\"") == std::string::npos, ErrorCode::kInvalidInput,
            "csv: cell needs quoting: " + cells[i]);
    if (i) body_ += ',';
    body_ += cells[i];
  }
  body_ += '\n';
}

std::string CsvWriter::str() const { return body_; }

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      require(line == kCsvHeader, ErrorCode::kParseError, "csv: unknown version line " + line);
      header_seen = true;
      continue;
    }
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
      const auto comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (t.columns.empty()) {
      t.columns = std::move(cells);
    } else {
      require(cells.size() == t.columns.size(), ErrorCode::kParseError, "csv: ragged row");
      t.rows.push_back(std::move(cells));
    }
  }
  require(header_seen, ErrorCode::kParseError, "csv: missing version line");
  return t;
}

}  // namespace dimlift

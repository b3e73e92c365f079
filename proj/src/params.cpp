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

#include "dimlift/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "json.hpp"

#include "dimlift/error.hpp"
#include "dimlift/io.hpp"

namespace dimlift {

namespace {

constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

struct Reader {
  const std::vector<unsigned char>& bytes;
  std::size_t pos = 0;
  template <typename T>
  T get() {
    require(pos + sizeof(T) <= bytes.size(), ErrorCode::kParseError, "ParamStore: truncated");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
};

}  // namespace

std::size_t ParamStore::add(const std::string& name, std::size_t rows, std::size_t cols) {
  require(!name.empty(), ErrorCode::kInvalidInput, "ParamStore: empty name");
  require(!contains(name), ErrorCode::kInvalidInput, "ParamStore: duplicate name " + name);
  Entry e{name, rows, cols, values_.size()};
  entries_.push_back(e);
  by_name_[name] = entries_.size() - 1;
  values_.resize(values_.size() + rows * cols, 0.0);
  grads_.resize(values_.size(), 0.0);
  return entries_.size() - 1;
}

std::size_t ParamStore::add_uniform(const std::string& name, std::size_t rows, std::size_t cols,
                                    double bound, RngStream& rng) {
  const std::size_t i = add(name, rows, cols);
  double* p = data(i);
  for (std::size_t k = 0; k < rows * cols; ++k) p[k] = rng.uniform(-bound, bound);
  return i;
}

std::size_t ParamStore::index(const std::string& name) const {
  auto it = by_name_.find(name);
  require(it != by_name_.end(), ErrorCode::kInvalidInput, "ParamStore: unknown name " + name);
  return it->second;
}

Matrix ParamStore::get(std::size_t i) const {
  const Entry& e = entries_.at(i);
  return Matrix(e.rows, e.cols,
                std::vector<double>(values_.begin() + e.offset,
                                    values_.begin() + e.offset + e.rows * e.cols));
}

void ParamStore::set(std::size_t i, const Matrix& m) {
  const Entry& e = entries_.at(i);
  require(m.rows() == e.rows && m.cols() == e.cols, ErrorCode::kInvalidInput,
          "ParamStore: shape mismatch for " + e.name);
  std::copy(m.data().begin(), m.data().end(), values_.begin() + e.offset);
}

void ParamStore::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }
void ParamStore::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

std::vector<unsigned char> ParamStore::serialize() const {
  std::vector<unsigned char> out{'D', 'L', 'P', 'S'};
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const Entry& e : entries_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint64_t>(out, e.rows);
    put<std::uint64_t>(out, e.cols);
    for (std::size_t k = 0; k < e.rows * e.cols; ++k) put<double>(out, values_[e.offset + k]);
  }
  return out;
}

ParamStore ParamStore::deserialize(const std::vector<unsigned char>& bytes) {
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), "DLPS", 4) == 0,
          ErrorCode::kParseError, "ParamStore: bad magic");
  Reader r{bytes, 4};
  const auto version = r.get<std::uint32_t>();
  require(version == kVersion, ErrorCode::kParseError,
          "ParamStore: unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  ParamStore ps;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    require(r.pos + len <= bytes.size(), ErrorCode::kParseError, "ParamStore: truncated");
    std::string name(bytes.begin() + r.pos, bytes.begin() + r.pos + len);
    r.pos += len;
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    require(rows * cols <= (bytes.size() - r.pos) / 8, ErrorCode::kParseError,
            "ParamStore: truncated payload");
    const std::size_t idx = ps.add(name, rows, cols);
    double* p = ps.data(idx);
    for (std::size_t k = 0; k < rows * cols; ++k) p[k] = r.get<double>();
  }
  require(r.pos == bytes.size(), ErrorCode::kParseError, "ParamStore: trailing bytes");
  return ps;
}

std::string ParamStore::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "DLPS";
  j["version"] = kVersion;
  auto& arr = j["params"] = nlohmann::ordered_json::array();
  for (const Entry& e : entries_) {
    nlohmann::ordered_json p;
    p["name"] = e.name;
    p["shape"] = {e.rows, e.cols};
    p["values"] = std::vector<double>(values_.begin() + e.offset,
                                      values_.begin() + e.offset + e.rows * e.cols);
    arr.push_back(p);
  }
  return j.dump(1) + "\n";
}

void ParamStore::save(const std::string& path) const {
  const auto bytes = serialize();
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
  write_file_atomic(path + ".json", to_json());
}

ParamStore ParamStore::load(const std::string& path) {
  const std::string s = read_file(path);
  return deserialize(std::vector<unsigned char>(s.begin(), s.end()));
}

}  // namespace dimlift

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

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "dimlift/matrix.hpp"
#include "dimlift/rng.hpp"

namespace dimlift {

/// Named parameters in one flat vector, with a gradient vector of equal length.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;
  };

  /// Adds a parameter and returns its index. Names must be unique.
  std::size_t add(const std::string& name, std::size_t rows, std::size_t cols);
  /// Adds a parameter initialized uniformly in [-bound, bound].
  std::size_t add_uniform(const std::string& name, std::size_t rows, std::size_t cols,
                          double bound, RngStream& rng);

  std::size_t index(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) > 0; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return values_.size(); }

  Matrix get(std::size_t i) const;
  Matrix get(const std::string& name) const { return get(index(name)); }
  void set(std::size_t i, const Matrix& m);
  void set(const std::string& name, const Matrix& m) { set(index(name), m); }
  double* data(std::size_t i) { return values_.data() + entries_[i].offset; }
  const double* data(std::size_t i) const { return values_.data() + entries_[i].offset; }
  double* grad_data(std::size_t i) { return grads_.data() + entries_[i].offset; }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& grads() noexcept { return grads_; }
  const std::vector<double>& grads() const noexcept { return grads_; }
  void zero_grad();
  void fill(double v);

  /// Little-endian binary: "DLPS", u32 version, u32 count, then per entry
  /// u32 name length, name bytes, u64 rows, u64 cols, rows*cols float64.
  std::vector<unsigned char> serialize() const;
  static ParamStore deserialize(const std::vector<unsigned char>& bytes);
  std::string to_json() const;
  void save(const std::string& path) const;  // writes path and path + ".json"
  static ParamStore load(const std::string& path);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> by_name_;
  std::vector<double> values_;
  std::vector<double> grads_;
};

}  // namespace dimlift

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

#include "dimlift/rng.hpp"

#include <cmath>
#include <numbers>

namespace dimlift {

double RngStream::gaussian() noexcept {
  const double u1 = 1.0 - uniform();  // (0, 1], safe for log
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t bound) noexcept {
  if (bound <= 1) return 0;
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % bound;
}

std::vector<double> RngStream::uniform_vec(std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = uniform();
  return out;
}

std::vector<double> RngStream::gaussian_vec(std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = gaussian();
  return out;
}

std::vector<RngStream> rng_streams(std::uint64_t seed, std::size_t count) {
  std::vector<RngStream> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.emplace_back(derive_seed(seed, i));
  return out;
}

}  // namespace dimlift

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

#include <cstdint>
#include <vector>

namespace dimlift {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

/// Child seed for sub-stream `index` of `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return mix64(seed ^ mix64(index + 0x632BE59BD9B4E019ULL));
}

/// Counter-based generator. Draw k (k = 1, 2, ...) is
///   mix64(seed + k * 0x9E3779B97F4A7C15)
/// so the stream is fully determined by (seed, counter) on every platform.
/// uniform() = (draw >> 11) * 2^-53, in [0, 1).
/// gaussian() uses Box-Muller with u1 = 1 - uniform(), u2 = uniform(), and
/// keeps only the cosine branch so each normal consumes exactly two draws.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(seed_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) noexcept { return a + (b - a) * uniform(); }
  double gaussian() noexcept;
  double gaussian(double mean, double sd) noexcept { return mean + sd * gaussian(); }
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept;

  std::vector<double> uniform_vec(std::size_t n);
  std::vector<double> gaussian_vec(std::size_t n);

  RngStream split(std::uint64_t index) const noexcept {
    return RngStream(derive_seed(seed_, index));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::vector<RngStream> rng_streams(std::uint64_t seed, std::size_t count);

}  // namespace dimlift

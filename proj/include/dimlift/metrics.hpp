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
#include <optional>
#include <span>

#include "dimlift/matrix.hpp"

namespace dimlift {

/// Largest lcm accepted by the sorted 1D Wasserstein distance.
inline constexpr std::uint64_t kMaxScalarLcm = 1000000;
/// Largest lcm accepted by assignment-based distances.
inline constexpr std::uint64_t kMaxAssignLcm = 2000;
/// Largest n accepted by the exact cut norm.
inline constexpr std::size_t kMaxCutExact = 14;

std::uint64_t checked_lcm(std::uint64_t a, std::uint64_t b, std::uint64_t cap);

/// W_p between uniform empirical measures on the line. p may be infinity.
/// Equal to the normalized l_p distance of the sorted lcm-duplicated vectors,
/// evaluated by merging quantile breakpoints instead of materializing them.
double wasserstein_1d(std::span<const double> x, std::span<const double> y, double p);

/// W_p between uniform empirical measures in R^d (rows are points), solved as
/// an assignment on lcm-duplicated supports. p must be finite.
double wasserstein_assign(const Matrix& x, const Matrix& y, double p);

struct CloudDistance {
  double value = 0.0;   // objective at the best alignment found
  Matrix orth;          // best h (applied as X h^T)
  bool heuristic = true;
};

/// Upper estimate of inf over O(k) x S of W_p(X h^T, Y) by alternating
/// assignment and Procrustes steps from several restarts.
CloudDistance sym_dist_cloud(const Matrix& x, const Matrix& y, double p,
                             std::size_t restarts = 16, std::uint64_t seed = 0);

/// max((1/n^2) max_{S,T} |sum_{S x T} A|, (1/n) max_S ||sum_S X_i||) by enumeration.
/// X may have zero columns.
double cut_norm_exact(const Matrix& a, const Matrix& x);

struct CutBounds {
  double lower = 0.0;
  double upper = 0.0;
  std::optional<double> exact;
};

/// Bounds on the cut norm from the operator 2-norm (entries assumed in [-1, 1]).
CutBounds cut_bounds(const Matrix& a, const Matrix& x);

/// Hausdorff distance between row sets with the Euclidean metric.
double hausdorff(const Matrix& x, const Matrix& y);

/// Third lower bound of the Gromov-Wasserstein distance with Euclidean
/// distance profiles, including the conventional factor 1/2.
double gw_tlb(const Matrix& x, const Matrix& y, double p);

/// Each row repeated m times consecutively.
Matrix duplicate_rows(const Matrix& x, std::size_t m);

}  // namespace dimlift

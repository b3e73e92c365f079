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
#include <vector>

#include "dimlift/matrix.hpp"

namespace dimlift {

/// Thin SVD X = U diag(s) V^T of an n x k matrix with k <= n.
struct SvdResult {
  Matrix left;                  // n x k, orthonormal columns
  std::vector<double> singular; // descending, nonnegative
  Matrix right;                 // k x k, orthogonal, columns are v_i

  /// Smallest gap between consecutive singular values (infinity when k == 1).
  double gap1() const;
  /// Smallest gap between consecutive squared singular values.
  double gap2() const;
  Matrix reconstruct() const;
};

/// One-sided Jacobi SVD. Each right-singular vector is flipped so that its
/// first entry with magnitude above 1e-12 is positive (lexicographic order).
SvdResult svd(const Matrix& x);

/// Radius R(X) within which every right-singular-vector sign is stable,
/// computed with functional singular values s_i / sqrt(n). Returns 0 when
/// X has repeated singular values or a zero entry in V.
double sign_stability_radius(const Matrix& x);

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi.
/// Eigenvalues are returned in descending order with matching columns.
struct SymEigen {
  std::vector<double> values;
  Matrix vectors;
};
SymEigen sym_eigen(const Matrix& a);

/// Minimum-cost perfect assignment (row i -> column perm[i]).
std::vector<std::size_t> hungarian(const Matrix& cost);
double assignment_cost(const Matrix& cost, const std::vector<std::size_t>& perm);

/// Largest absolute eigenvalue of a symmetric matrix.
double op_norm_2(const Matrix& a);

}  // namespace dimlift

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
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "dimlift/matrix.hpp"
#include "dimlift/params.hpp"

namespace dimlift::ad {

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const noexcept { return id != std::numeric_limits<std::size_t>::max(); }
};

/// Reverse-mode tape. Values are recorded in evaluation order and the
/// backward pass walks them in reverse. Parameter gradients are collected in
/// a buffer owned by the tape, so independent tapes can share one store.
class Tape {
 public:
  /// Receives the output gradient and pushes contributions to the inputs
  /// through grad_slot().
  using Backward = std::function<void(Tape&, const Matrix&)>;

  explicit Tape(const ParamStore* params = nullptr);

  Var constant(Matrix v);
  /// Differentiable leaf (used for input gradients).
  Var leaf(Matrix v);
  Var param(std::size_t index);
  Var param(const std::string& name);
  Var record(Matrix v, bool needs_grad, Backward fn);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs; }
  /// Gradient accumulator of v, zero-filled on first use. Null for constants.
  Matrix* grad_slot(Var v);
  /// Gradient after backward(); zero matrix when nothing reached v.
  Matrix grad(Var v) const;

  void backward(Var out, const Matrix& seed);
  /// Seeds a 1 x 1 output with 1.
  void backward(Var out);

  const ParamStore* params() const noexcept { return params_; }
  /// Gradient with respect to every entry of the store (flat layout).
  const std::vector<double>& param_grads() const noexcept { return param_grads_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward fn;
    bool needs = false;
    bool has_grad = false;
    std::ptrdiff_t param = -1;
  };
  std::vector<Node> nodes_;
  const ParamStore* params_;
  std::vector<Var> param_nodes_;
  std::vector<double> param_grads_;
};

enum class Activation { kRelu, kTanh, kIdentity };

// Elementwise and linear algebra.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
/// s (1 x 1) times a.
Var scalar_mul(Tape& t, Var s, Var a);
/// a (r x c) plus the row vector b (1 x c) added to every row.
Var add_row(Tape& t, Var a, Var b);
/// a plus the scalar s (1 x 1) in every entry.
Var add_scalar(Tape& t, Var a, Var s);
Var matmul(Tape& t, Var a, Var b, bool trans_a = false, bool trans_b = false);
Var activate(Tape& t, Var a, Activation act);
/// Rows scaled by fixed coefficients.
Var row_scale(Tape& t, Var a, std::vector<double> s);

// Reductions and reshaping.
Var sum_all(Tape& t, Var a);
Var row_sums(Tape& t, Var a);   // r x 1
Var mean_rows(Tape& t, Var a);  // 1 x c, column means
Var sum_rows(Tape& t, Var a);   // 1 x c, column sums
/// Column-wise max over rows; the gradient goes to the first maximizing row.
Var max_rows(Tape& t, Var a);
Var diag_vec(Tape& t, Var a);  // n x 1
Var trace(Tape& t, Var a);     // 1 x 1
Var concat_cols(Tape& t, const std::vector<Var>& parts);
Var slice_cols(Tape& t, Var a, std::size_t begin, std::size_t end);
Var reshape(Tape& t, Var a, std::size_t rows, std::size_t cols);
Var gather_rows(Tape& t, Var a, std::vector<std::size_t> index);
/// Strict upper triangle of a square matrix, row by row, as a column.
Var upper_entries(Tape& t, Var a);

/// Mean squared error against a fixed target of the same shape.
Var mse(Tape& t, Var pred, const Matrix& target);

// Fused graph operations.

/// a1 * A + u 1^T + 1 u^T + c 1 1^T with a1, c scalars and u an n x 1 column.
Var affine_adj(Tape& t, Var a, Var a1, Var u, Var c);

/// One normalized 2-IGN linear layer. `x` holds C_in channels of n x n
/// matrices, one flattened channel per row. `alpha` is (15 C_in) x C_out with
/// row (term * C_in + c) and `beta` is 2 x C_out.
Var ign_layer(Tape& t, Var x, Var alpha, Var beta, std::size_t n);
/// Row means of each channel: output is n x C.
Var ign_readout(Tape& t, Var x, std::size_t n);

/// Weighted max aggregation: out(i, c) = max_j A(i, j) * m(j, c) for a fixed A.
Var weighted_max(Tape& t, const Matrix& a, Var m);

/// (1/(n(n-1))) sum_{i != j} G_ii G_ij, or (1/n^2) sum_{i,j} G_ii G_ij.
Var diag_weighted_mean(Tape& t, Var g, bool include_diagonal);

/// X V with V the right-singular vectors of X and each column sign-fixed so
/// that its third moment is nonnegative. When the backward pass is needed and
/// the singular values are closer than 1e-8, `degenerate` is set and no
/// gradient flows to X.
Var svd_project(Tape& t, Var x, bool* degenerate = nullptr);

/// Third-moment sign canonicalization of the columns of X V (no gradient).
Matrix svd_features(const Matrix& x, bool* degenerate = nullptr);

}  // namespace dimlift::ad

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

#include "dimlift/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "dimlift/error.hpp"
#include "dimlift/linalg.hpp"

namespace dimlift::ad {

Tape::Tape(const ParamStore* params) : params_(params) {
  if (params_) {
    param_nodes_.resize(params_->entries().size());
    param_grads_.assign(params_->size(), 0.0);
  }
}

Var Tape::constant(Matrix v) { return record(std::move(v), false, nullptr); }

Var Tape::leaf(Matrix v) {
  nodes_.push_back(Node{std::move(v), {}, nullptr, true, false, -1});
  return Var{nodes_.size() - 1};
}

Var Tape::param(std::size_t index) {
  require(params_ != nullptr, ErrorCode::kInvalidInput, "tape has no parameter store");
  Var& slot = param_nodes_.at(index);
  if (!slot.valid()) {
    nodes_.push_back(
        Node{params_->get(index), {}, nullptr, true, false, static_cast<std::ptrdiff_t>(index)});
    slot = Var{nodes_.size() - 1};
  }
  return slot;
}

Var Tape::param(const std::string& name) {
  require(params_ != nullptr, ErrorCode::kInvalidInput, "tape has no parameter store");
  return param(params_->index(name));
}

Var Tape::record(Matrix v, bool needs_grad, Backward fn) {
  nodes_.push_back(Node{std::move(v), {}, needs_grad ? std::move(fn) : nullptr, needs_grad, false, -1});
  return Var{nodes_.size() - 1};
}

Matrix* Tape::grad_slot(Var v) {
  Node& node = nodes_[v.id];
  if (!node.needs) return nullptr;
  if (!node.has_grad) {
    node.grad = Matrix(node.value.rows(), node.value.cols());
    node.has_grad = true;
  }
  return &node.grad;
}

Matrix Tape::grad(Var v) const {
  const Node& node = nodes_[v.id];
  if (node.has_grad) return node.grad;
  return Matrix(node.value.rows(), node.value.cols());
}

void Tape::backward(Var out, const Matrix& seed) {
  require(seed.same_shape(value(out)), ErrorCode::kInvalidInput, "backward: seed shape mismatch");
  Matrix* g = grad_slot(out);
  if (!g) return;
  *g += seed;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad) continue;
    if (node.fn) {
      node.fn(*this, node.grad);
    } else if (node.param >= 0) {
      const auto& e = params_->entry(static_cast<std::size_t>(node.param));
      for (std::size_t k = 0; k < node.grad.size(); ++k) param_grads_[e.offset + k] += node.grad[k];
    }
  }
}

void Tape::backward(Var out) {
  require(value(out).rows() == 1 && value(out).cols() == 1, ErrorCode::kInvalidInput,
          "backward: output is not scalar");
  backward(out, Matrix(1, 1, 1.0));
}

namespace {

void check_same(const Matrix& a, const Matrix& b, const char* op) {
  require(a.same_shape(b), ErrorCode::kInvalidInput, std::string(op) + ": shape mismatch");
}

void check_scalar(const Matrix& s, const char* op) {
  require(s.rows() == 1 && s.cols() == 1, ErrorCode::kInvalidInput,
          std::string(op) + ": expected 1 x 1 operand");
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  check_same(t.value(a), t.value(b), "add");
  return t.record(t.value(a) + t.value(b), t.needs_grad(a) || t.needs_grad(b),
                  [a, b](Tape& tp, const Matrix& g) {
                    if (auto* ga = tp.grad_slot(a)) *ga += g;
                    if (auto* gb = tp.grad_slot(b)) *gb += g;
                  });
}

Var sub(Tape& t, Var a, Var b) {
  check_same(t.value(a), t.value(b), "sub");
  return t.record(t.value(a) - t.value(b), t.needs_grad(a) || t.needs_grad(b),
                  [a, b](Tape& tp, const Matrix& g) {
                    if (auto* ga = tp.grad_slot(a)) *ga += g;
                    if (auto* gb = tp.grad_slot(b)) *gb -= g;
                  });
}

Var mul(Tape& t, Var a, Var b) {
  const Matrix& va = t.value(a);
  const Matrix& vb = t.value(b);
  check_same(va, vb, "mul");
  Matrix out = va;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= vb[k];
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                  [a, b](Tape& tp, const Matrix& g) {
                    if (auto* ga = tp.grad_slot(a)) {
                      const Matrix& vb = tp.value(b);
                      for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += g[k] * vb[k];
                    }
                    if (auto* gb = tp.grad_slot(b)) {
                      const Matrix& va = tp.value(a);
                      for (std::size_t k = 0; k < g.size(); ++k) (*gb)[k] += g[k] * va[k];
                    }
                  });
}

Var scale(Tape& t, Var a, double s) {
  return t.record(s * t.value(a), t.needs_grad(a), [a, s](Tape& tp, const Matrix& g) {
    if (auto* ga = tp.grad_slot(a))
      for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += s * g[k];
  });
}

Var scalar_mul(Tape& t, Var s, Var a) {
  check_scalar(t.value(s), "scalar_mul");
  const double sv = t.value(s)[0];
  return t.record(sv * t.value(a), t.needs_grad(s) || t.needs_grad(a),
                  [s, a](Tape& tp, const Matrix& g) {
                    if (auto* gs = tp.grad_slot(s)) (*gs)[0] += dot(g, tp.value(a));
                    if (auto* ga = tp.grad_slot(a)) {
                      const double sv = tp.value(s)[0];
                      for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += sv * g[k];
                    }
                  });
}

Var add_row(Tape& t, Var a, Var b) {
  const Matrix& va = t.value(a);
  const Matrix& vb = t.value(b);
  require(vb.rows() == 1 && vb.cols() == va.cols(), ErrorCode::kInvalidInput,
          "add_row: shape mismatch");
  Matrix out = va;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += vb[j];
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                  [a, b](Tape& tp, const Matrix& g) {
                    if (auto* ga = tp.grad_slot(a)) *ga += g;
                    if (auto* gb = tp.grad_slot(b))
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) (*gb)[j] += g(i, j);
                  });
}

Var add_scalar(Tape& t, Var a, Var s) {
  check_scalar(t.value(s), "add_scalar");
  Matrix out = t.value(a);
  const double sv = t.value(s)[0];
  for (double& v : out.data()) v += sv;
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(s),
                  [a, s](Tape& tp, const Matrix& g) {
                    if (auto* ga = tp.grad_slot(a)) *ga += g;
                    if (auto* gs = tp.grad_slot(s)) {
                      double acc = 0.0;
                      for (double v : g.data()) acc += v;
                      (*gs)[0] += acc;
                    }
                  });
}

Var matmul(Tape& t, Var a, Var b, bool ta, bool tb) {
  return t.record(dimlift::matmul(t.value(a), t.value(b), ta, tb),
                  t.needs_grad(a) || t.needs_grad(b), [a, b, ta, tb](Tape& tp, const Matrix& g) {
                    const Matrix& va = tp.value(a);
                    const Matrix& vb = tp.value(b);
                    if (auto* ga = tp.grad_slot(a)) {
                      if (!ta && !tb) matmul_acc(*ga, g, vb, false, true);
                      if (!ta && tb) matmul_acc(*ga, g, vb, false, false);
                      if (ta && !tb) matmul_acc(*ga, vb, g, false, true);
                      if (ta && tb) matmul_acc(*ga, vb, g, true, true);
                    }
                    if (auto* gb = tp.grad_slot(b)) {
                      if (!ta && !tb) matmul_acc(*gb, va, g, true, false);
                      if (!ta && tb) matmul_acc(*gb, g, va, true, false);
                      if (ta && !tb) matmul_acc(*gb, va, g, false, false);
                      if (ta && tb) matmul_acc(*gb, g, va, true, true);
                    }
                  });
}

Var activate(Tape& t, Var a, Activation act) {
  if (act == Activation::kIdentity) return a;
  Matrix out = t.value(a);
  if (act == Activation::kRelu) {
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  } else {
    for (double& v : out.data()) v = std::tanh(v);
  }
  const std::size_t out_id = t.size();
  return t.record(std::move(out), t.needs_grad(a), [a, act, out_id](Tape& tp, const Matrix& g) {
    auto* ga = tp.grad_slot(a);
    const Matrix& y = tp.value(Var{out_id});
    if (act == Activation::kRelu) {
      for (std::size_t k = 0; k < g.size(); ++k)
        if (y[k] > 0.0) (*ga)[k] += g[k];
    } else {
      for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += g[k] * (1.0 - y[k] * y[k]);
    }
  });
}

Var row_scale(Tape& t, Var a, std::vector<double> s) {
  Matrix out = t.value(a);
  require(s.size() == out.rows(), ErrorCode::kInvalidInput, "row_scale: length mismatch");
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (double& v : out.row_span(i)) v *= s[i];
  return t.record(std::move(out), t.needs_grad(a),
                  [a, s = std::move(s)](Tape& tp, const Matrix& g) {
                    auto* ga = tp.grad_slot(a);
                    for (std::size_t i = 0; i < g.rows(); ++i)
                      for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(i, j) += s[i] * g(i, j);
                  });
}

Var sum_all(Tape& t, Var a) {
  double acc = 0.0;
  for (double v : t.value(a).data()) acc += v;
  return t.record(Matrix(1, 1, acc), t.needs_grad(a), [a](Tape& tp, const Matrix& g) {
    for (double& v : tp.grad_slot(a)->data()) v += g[0];
  });
}

Var row_sums(Tape& t, Var a) {
  const Matrix& va = t.value(a);
  Matrix out(va.rows(), 1);
  for (std::size_t i = 0; i < va.rows(); ++i)
    for (double v : va.row_span(i)) out[i] += v;
  return t.record(std::move(out), t.needs_grad(a), [a](Tape& tp, const Matrix& g) {
    auto* ga = tp.grad_slot(a);
    for (std::size_t i = 0; i < ga->rows(); ++i)
      for (double& v : ga->row_span(i)) v += g[i];
  });
}

Var sum_rows(Tape& t, Var a) {
  const Matrix& va = t.value(a);
  Matrix out(1, va.cols());
  for (std::size_t i = 0; i < va.rows(); ++i)
    for (std::size_t j = 0; j < va.cols(); ++j) out[j] += va(i, j);
  return t.record(std::move(out), t.needs_grad(a), [a](Tape& tp, const Matrix& g) {
    auto* ga = tp.grad_slot(a);
    for (std::size_t i = 0; i < ga->rows(); ++i)
      for (std::size_t j = 0; j < ga->cols(); ++j) (*ga)(i, j) += g[j];
  });
}

Var mean_rows(Tape& t, Var a) {
  const std::size_t n = t.value(a).rows();
  require(n > 0, ErrorCode::kInvalidInput, "mean_rows: empty input");
  return scale(t, sum_rows(t, a), 1.0 / static_cast<double>(n));
}

Var max_rows(Tape& t, Var a) {
  const Matrix& va = t.value(a);
  require(va.rows() > 0, ErrorCode::kInvalidInput, "max_rows: empty input");
  Matrix out(1, va.cols());
  std::vector<std::size_t> arg(va.cols(), 0);
  for (std::size_t j = 0; j < va.cols(); ++j) {
    out[j] = va(0, j);
    for (std::size_t i = 1; i < va.rows(); ++i) {
      if (va(i, j) > out[j]) {
        out[j] = va(i, j);
        arg[j] = i;
      }
    }
  }
  return t.record(std::move(out), t.needs_grad(a),
                  [a, arg = std::move(arg)](Tape& tp, const Matrix& g) {
                    auto* ga = tp.grad_slot(a);
                    for (std::size_t j = 0; j < arg.size(); ++j) (*ga)(arg[j], j) += g[j];
                  });
}

Var diag_vec(Tape& t, Var a) {
  const Matrix& va = t.value(a);
  require(va.rows() == va.cols(), ErrorCode::kInvalidInput, "diag_vec: not square");
  Matrix out(va.rows(), 1);
  for (std::size_t i = 0; i < va.rows(); ++i) out[i] = va(i, i);
  return t.record(std::move(out), t.needs_grad(a), [a](Tape& tp, const Matrix& g) {
    auto* ga = tp.grad_slot(a);
    for (std::size_t i = 0; i < ga->rows(); ++i) (*ga)(i, i) += g[i];
  });
}

Var trace(Tape& t, Var a) { return sum_all(t, diag_vec(t, a)); }

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorCode::kInvalidInput, "concat_cols: no parts");
  const std::size_t rows = t.value(parts[0]).rows();
  std::size_t cols = 0;
  bool needs = false;
  for (Var p : parts) {
    require(t.value(p).rows() == rows, ErrorCode::kInvalidInput, "concat_cols: row mismatch");
    cols += t.value(p).cols();
    needs = needs || t.needs_grad(p);
  }
  Matrix out(rows, cols);
  std::size_t c0 = 0;
  for (Var p : parts) {
    const Matrix& v = t.value(p);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, c0 + j) = v(i, j);
    c0 += v.cols();
  }
  return t.record(std::move(out), needs, [parts](Tape& tp, const Matrix& g) {
    std::size_t c0 = 0;
    for (Var p : parts) {
      const std::size_t pc = tp.value(p).cols();
      if (auto* gp = tp.grad_slot(p))
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < pc; ++j) (*gp)(i, j) += g(i, c0 + j);
      c0 += pc;
    }
  });
}

Var slice_cols(Tape& t, Var a, std::size_t begin, std::size_t end) {
  const Matrix& va = t.value(a);
  require(begin <= end && end <= va.cols(), ErrorCode::kInvalidInput, "slice_cols: bad range");
  Matrix out(va.rows(), end - begin);
  for (std::size_t i = 0; i < va.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = va(i, j);
  return t.record(std::move(out), t.needs_grad(a), [a, begin](Tape& tp, const Matrix& g) {
    auto* ga = tp.grad_slot(a);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(i, begin + j) += g(i, j);
  });
}

Var reshape(Tape& t, Var a, std::size_t rows, std::size_t cols) {
  const Matrix& va = t.value(a);
  require(rows * cols == va.size(), ErrorCode::kInvalidInput, "reshape: size mismatch");
  return t.record(Matrix(rows, cols, va.data()), t.needs_grad(a),
                  [a](Tape& tp, const Matrix& g) {
                    auto* ga = tp.grad_slot(a);
                    for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += g[k];
                  });
}

Var gather_rows(Tape& t, Var a, std::vector<std::size_t> index) {
  Matrix out = dimlift::gather_rows(t.value(a), index);
  return t.record(std::move(out), t.needs_grad(a),
                  [a, index = std::move(index)](Tape& tp, const Matrix& g) {
                    auto* ga = tp.grad_slot(a);
                    for (std::size_t i = 0; i < index.size(); ++i)
                      for (std::size_t j = 0; j < g.cols(); ++j) (*ga)(index[i], j) += g(i, j);
                  });
}

Var upper_entries(Tape& t, Var a) {
  const Matrix& va = t.value(a);
  require(va.rows() == va.cols(), ErrorCode::kInvalidInput, "upper_entries: not square");
  const std::size_t n = va.rows();
  Matrix out(n * (n - (n > 0 ? 1 : 0)) / 2, 1);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out[k++] = va(i, j);
  return t.record(std::move(out), t.needs_grad(a), [a, n](Tape& tp, const Matrix& g) {
    auto* ga = tp.grad_slot(a);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) (*ga)(i, j) += g[k++];
  });
}

Var mse(Tape& t, Var pred, const Matrix& target) {
  const Matrix& p = t.value(pred);
  check_same(p, target, "mse");
  require(p.size() > 0, ErrorCode::kInvalidInput, "mse: empty");
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) acc += (p[k] - target[k]) * (p[k] - target[k]);
  const double inv = 1.0 / static_cast<double>(p.size());
  return t.record(Matrix(1, 1, acc * inv), t.needs_grad(pred),
                  [pred, target, inv](Tape& tp, const Matrix& g) {
                    auto* gp = tp.grad_slot(pred);
                    const Matrix& p = tp.value(pred);
                    for (std::size_t k = 0; k < p.size(); ++k)
                      (*gp)[k] += 2.0 * inv * g[0] * (p[k] - target[k]);
                  });
}

Var affine_adj(Tape& t, Var a, Var a1, Var u, Var c) {
  const Matrix& va = t.value(a);
  const Matrix& vu = t.value(u);
  const std::size_t n = va.rows();
  require(va.cols() == n && vu.rows() == n && vu.cols() == 1, ErrorCode::kInvalidInput,
          "affine_adj: shape mismatch");
  check_scalar(t.value(a1), "affine_adj");
  check_scalar(t.value(c), "affine_adj");
  const double s = t.value(a1)[0];
  const double cv = t.value(c)[0];
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = s * va(i, j) + (vu[i] + vu[j]) + cv;  // exact symmetry
  const bool needs = t.needs_grad(a) || t.needs_grad(a1) || t.needs_grad(u) || t.needs_grad(c);
  return t.record(std::move(out), needs, [a, a1, u, c, n](Tape& tp, const Matrix& g) {
    if (auto* ga = tp.grad_slot(a)) {
      const double s = tp.value(a1)[0];
      for (std::size_t k = 0; k < g.size(); ++k) (*ga)[k] += s * g[k];
    }
    if (auto* g1 = tp.grad_slot(a1)) (*g1)[0] += dot(g, tp.value(a));
    if (auto* gu = tp.grad_slot(u)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          (*gu)[i] += g(i, j);
          (*gu)[j] += g(i, j);
        }
    }
    if (auto* gc = tp.grad_slot(c)) {
      double acc = 0.0;
      for (double v : g.data()) acc += v;
      (*gc)[0] += acc;
    }
  });
}

namespace {

// Term indices of the normalized 2-IGN basis (alpha_1 .. alpha_15).
enum IgnTerm {
  kId = 0, kTr, kDiagDiag, kRowL, kRowR1, kDiagRow, kColL, kRowR2, kDiagCol,
  kTotOnes, kTotId, kTrOnes, kTrId, kDiagL, kDiagR, kIgnTerms
};

struct ChannelStats {
  std::vector<double> rn, csn, d;  // A1/n, A^T 1/n, diag*(A)
  double totn = 0.0, trd = 0.0;    // 1^T A 1 / n^2, Tr A
};

ChannelStats channel_stats(const double* a, std::size_t n) {
  ChannelStats s;
  s.rn.assign(n, 0.0);
  s.csn.assign(n, 0.0);
  s.d.assign(n, 0.0);
  const double dn = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      s.rn[i] += a[i * n + j];
      s.csn[j] += a[i * n + j];
    }
    s.d[i] = a[i * n + i];
    s.trd += s.d[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    s.totn += s.rn[i];
    s.rn[i] /= dn;
    s.csn[i] /= dn;
  }
  s.totn /= dn * dn;
  return s;
}

double vdot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void transpose_into(const double* a, std::size_t n, std::vector<double>& out) {
  out.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * n + i] = a[i * n + j];
}

}  // namespace

Var ign_layer(Tape& t, Var x, Var alpha, Var beta, std::size_t n) {
  const Matrix& vx = t.value(x);
  const Matrix& al = t.value(alpha);
  const Matrix& be = t.value(beta);
  const std::size_t cin = vx.rows();
  const std::size_t cout = al.cols();
  const std::size_t nn = n * n;
  require(vx.cols() == nn && al.rows() == kIgnTerms * cin && be.rows() == 2 && be.cols() == cout,
          ErrorCode::kInvalidInput, "ign_layer: shape mismatch");
  auto A = [&](std::size_t term, std::size_t c, std::size_t o) { return al(term * cin + c, o); };

  std::vector<ChannelStats> stats;
  stats.reserve(cin);
  for (std::size_t c = 0; c < cin; ++c) stats.push_back(channel_stats(vx.data().data() + c * vx.cols(), n));

  Matrix out(cout, nn);
  std::vector<double> tr;
  std::vector<double> u(n), w(n), gdiag(n);
  for (std::size_t c = 0; c < cin; ++c) {
    const double* a = vx.data().data() + c * vx.cols();
    transpose_into(a, n, tr);
    for (std::size_t o = 0; o < cout; ++o) {
      const double s1 = A(kId, c, o), s2 = A(kTr, c, o);
      double* m = out.data().data() + o * out.cols();
      for (std::size_t k = 0; k < nn; ++k) m[k] += s1 * a[k] + s2 * tr[k];
    }
  }
  for (std::size_t o = 0; o < cout; ++o) {
    std::fill(u.begin(), u.end(), 0.0);
    std::fill(w.begin(), w.end(), 0.0);
    std::fill(gdiag.begin(), gdiag.end(), 0.0);
    double sc = be(0, o), tc = be(1, o);
    for (std::size_t c = 0; c < cin; ++c) {
      const ChannelStats& s = stats[c];
      const double a3 = A(kDiagDiag, c, o), a4 = A(kRowL, c, o), a5 = A(kRowR1, c, o),
                   a6 = A(kDiagRow, c, o), a7 = A(kColL, c, o), a8 = A(kRowR2, c, o),
                   a9 = A(kDiagCol, c, o), a14 = A(kDiagL, c, o), a15 = A(kDiagR, c, o);
      for (std::size_t i = 0; i < n; ++i) {
        u[i] += a4 * s.rn[i] + a7 * s.csn[i] + a14 * s.d[i];
        w[i] += (a5 + a8) * s.rn[i] + a15 * s.d[i];
        gdiag[i] += a3 * s.d[i] + a6 * s.rn[i] + a9 * s.csn[i];
      }
      sc += A(kTotOnes, c, o) * s.totn + A(kTrOnes, c, o) * s.trd;
      tc += A(kTotId, c, o) * s.totn + A(kTrId, c, o) * s.trd;
    }
    double* m = out.data().data() + o * out.cols();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) m[i * n + j] += u[i] + w[j] + sc;
      m[i * n + i] += gdiag[i] + tc;
    }
  }

  const bool needs = t.needs_grad(x) || t.needs_grad(alpha) || t.needs_grad(beta);
  return t.record(std::move(out), needs, [x, alpha, beta, n, cin, cout, stats = std::move(stats)](
                                             Tape& tp, const Matrix& g) {
    const Matrix& vx = tp.value(x);
    const Matrix& al = tp.value(alpha);
    const std::size_t nn = n * n;
    const double dn = static_cast<double>(n);
    auto A = [&](std::size_t term, std::size_t c, std::size_t o) { return al(term * cin + c, o); };
    Matrix* gx = tp.grad_slot(x);
    Matrix* ga = tp.grad_slot(alpha);
    Matrix* gb = tp.grad_slot(beta);

    // Reductions of each output-channel gradient.
    std::vector<std::vector<double>> gu(cout, std::vector<double>(n, 0.0)), gw = gu, gg = gu;
    std::vector<double> gs(cout, 0.0), gt(cout, 0.0);
    for (std::size_t o = 0; o < cout; ++o) {
      const double* go = g.data().data() + o * g.cols();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          gu[o][i] += go[i * n + j];
          gw[o][j] += go[i * n + j];
        }
        gg[o][i] = go[i * n + i];
        gt[o] += gg[o][i];
      }
      for (double v : gu[o]) gs[o] += v;
    }
    if (gb) {
      for (std::size_t o = 0; o < cout; ++o) {
        (*gb)(0, o) += gs[o];
        (*gb)(1, o) += gt[o];
      }
    }
    std::vector<double> gtr;
    std::vector<double> tr;
    if (gx || ga) {
      for (std::size_t c = 0; c < cin; ++c) {
        const double* a = vx.data().data() + c * vx.cols();
        transpose_into(a, n, tr);
        const ChannelStats& s = stats[c];
        std::vector<double> grn(n, 0.0), gcsn(n, 0.0), gd(n, 0.0);
        double gtotn = 0.0, gtrd = 0.0;
        for (std::size_t o = 0; o < cout; ++o) {
          const double* go = g.data().data() + o * g.cols();
          if (ga) {
            double d1 = 0.0, d2 = 0.0;
            for (std::size_t k = 0; k < nn; ++k) {
              d1 += a[k] * go[k];
              d2 += tr[k] * go[k];
            }
            auto G = [&](std::size_t term) -> double& { return (*ga)(term * cin + c, o); };
            G(kId) += d1;
            G(kTr) += d2;
            G(kDiagDiag) += vdot(s.d, gg[o]);
            G(kRowL) += vdot(s.rn, gu[o]);
            G(kRowR1) += vdot(s.rn, gw[o]);
            G(kDiagRow) += vdot(s.rn, gg[o]);
            G(kColL) += vdot(s.csn, gu[o]);
            G(kRowR2) += vdot(s.rn, gw[o]);
            G(kDiagCol) += vdot(s.csn, gg[o]);
            G(kTotOnes) += s.totn * gs[o];
            G(kTotId) += s.totn * gt[o];
            G(kTrOnes) += s.trd * gs[o];
            G(kTrId) += s.trd * gt[o];
            G(kDiagL) += vdot(s.d, gu[o]);
            G(kDiagR) += vdot(s.d, gw[o]);
          }
          if (gx) {
            const double a1 = A(kId, c, o), a2 = A(kTr, c, o);
            double* gxc = gx->data().data() + c * gx->cols();
            // Identity term directly, transpose term through the transposed gradient.
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < n; ++j)
                gxc[i * n + j] += a1 * go[i * n + j] + a2 * go[j * n + i];
            const double a3 = A(kDiagDiag, c, o), a4 = A(kRowL, c, o), a5 = A(kRowR1, c, o),
                         a6 = A(kDiagRow, c, o), a7 = A(kColL, c, o), a8 = A(kRowR2, c, o),
                         a9 = A(kDiagCol, c, o), a14 = A(kDiagL, c, o), a15 = A(kDiagR, c, o);
            for (std::size_t i = 0; i < n; ++i) {
              grn[i] += a4 * gu[o][i] + (a5 + a8) * gw[o][i] + a6 * gg[o][i];
              gcsn[i] += a7 * gu[o][i] + a9 * gg[o][i];
              gd[i] += a3 * gg[o][i] + a14 * gu[o][i] + a15 * gw[o][i];
            }
            gtotn += A(kTotOnes, c, o) * gs[o] + A(kTotId, c, o) * gt[o];
            gtrd += A(kTrOnes, c, o) * gs[o] + A(kTrId, c, o) * gt[o];
          }
        }
        if (gx) {
          double* gxc = gx->data().data() + c * gx->cols();
          const double base = gtotn / (dn * dn);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j)
              gxc[i * n + j] += grn[i] / dn + gcsn[j] / dn + base;
            gxc[i * n + i] += gd[i] + gtrd;
          }
        }
      }
    }
  });
}

Var ign_readout(Tape& t, Var x, std::size_t n) {
  const Matrix& vx = t.value(x);
  require(vx.cols() == n * n, ErrorCode::kInvalidInput, "ign_readout: shape mismatch");
  const std::size_t ch = vx.rows();
  Matrix out(n, ch);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t o = 0; o < ch; ++o)
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += vx(o, i * n + j);
      out(i, o) = acc * inv;
    }
  return t.record(std::move(out), t.needs_grad(x), [x, n, ch, inv](Tape& tp, const Matrix& g) {
    auto* gx = tp.grad_slot(x);
    for (std::size_t o = 0; o < ch; ++o)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) (*gx)(o, i * n + j) += g(i, o) * inv;
  });
}

Var weighted_max(Tape& t, const Matrix& a, Var m) {
  const Matrix& vm = t.value(m);
  const std::size_t n = a.rows();
  require(a.cols() == vm.rows() && n > 0, ErrorCode::kInvalidInput, "weighted_max: shape mismatch");
  Matrix out(n, vm.cols());
  std::vector<std::size_t> arg(n * vm.cols(), 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < vm.cols(); ++c) {
      double best = a(i, 0) * vm(0, c);
      std::size_t bj = 0;
      for (std::size_t j = 1; j < vm.rows(); ++j) {
        const double v = a(i, j) * vm(j, c);
        if (v > best) {
          best = v;
          bj = j;
        }
      }
      out(i, c) = best;
      arg[i * vm.cols() + c] = bj;
    }
  return t.record(std::move(out), t.needs_grad(m),
                  [a, m, arg = std::move(arg)](Tape& tp, const Matrix& g) {
                    auto* gm = tp.grad_slot(m);
                    for (std::size_t i = 0; i < g.rows(); ++i)
                      for (std::size_t c = 0; c < g.cols(); ++c) {
                        const std::size_t j = arg[i * g.cols() + c];
                        (*gm)(j, c) += g(i, c) * a(i, j);
                      }
                  });
}

Var diag_weighted_mean(Tape& t, Var g, bool include_diagonal) {
  const Matrix& vg = t.value(g);
  const std::size_t n = vg.rows();
  require(vg.cols() == n, ErrorCode::kInvalidInput, "diag_weighted_mean: not square");
  require(include_diagonal ? n >= 1 : n >= 2, ErrorCode::kInvalidInput,
          "diag_weighted_mean: too few points");
  const double dn = static_cast<double>(n);
  const double c = include_diagonal ? 1.0 / (dn * dn) : 1.0 / (dn * (dn - 1.0));
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (include_diagonal || i != j) acc += vg(i, i) * vg(i, j);
  return t.record(Matrix(1, 1, c * acc), t.needs_grad(g),
                  [g, n, c, include_diagonal](Tape& tp, const Matrix& go) {
                    auto* gg = tp.grad_slot(g);
                    const Matrix& vg = tp.value(g);
                    const double s = c * go[0];
                    for (std::size_t i = 0; i < n; ++i) {
                      double row = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        if (i == j) continue;
                        (*gg)(i, j) += s * vg(i, i);
                        row += vg(i, j);
                      }
                      (*gg)(i, i) += s * (include_diagonal ? row + 2.0 * vg(i, i) : row);
                    }
                  });
}

namespace {

struct Projected {
  SvdResult svd;
  std::vector<double> sign;
  Matrix y;
  bool degenerate = false;
};

Projected project(const Matrix& x) {
  Projected p{svd(x), {}, {}, false};
  p.y = dimlift::matmul(x, p.svd.right);
  const std::size_t k = p.y.cols();
  p.sign.assign(k, 1.0);
  for (std::size_t j = 0; j < k; ++j) {
    double m3 = 0.0;
    for (std::size_t i = 0; i < p.y.rows(); ++i) m3 += p.y(i, j) * p.y(i, j) * p.y(i, j);
    if (m3 < 0.0) p.sign[j] = -1.0;
  }
  for (std::size_t i = 0; i < p.y.rows(); ++i)
    for (std::size_t j = 0; j < k; ++j) p.y(i, j) *= p.sign[j];
  p.degenerate = p.svd.gap1() < 1e-8;
  return p;
}

}  // namespace

Matrix svd_features(const Matrix& x, bool* degenerate) {
  Projected p = project(x);
  if (degenerate) *degenerate = p.degenerate;
  return std::move(p.y);
}

Var svd_project(Tape& t, Var x, bool* degenerate) {
  Projected p = project(t.value(x));
  if (degenerate) *degenerate = p.degenerate && t.needs_grad(x);
  Matrix y = p.y;
  const bool needs = t.needs_grad(x) && !p.degenerate;
  return t.record(std::move(y), needs, [x, p = std::move(p)](Tape& tp, const Matrix& g) {
    // Y = X V S. With P = U^T dX V, dV = V Omega where
    // Omega_ij = (s_i P_ij + s_j P_ji) / (s_j^2 - s_i^2), which gives
    // dL/dX = G' V^T + U C V^T with G' = G S and
    // C_ab = s_a (M_ab - M_ba) / (s_b^2 - s_a^2), M = diag(s) U^T G'.
    auto* gx = tp.grad_slot(x);
    const std::size_t k = g.cols();
    Matrix gs = g;
    for (std::size_t i = 0; i < gs.rows(); ++i)
      for (std::size_t j = 0; j < k; ++j) gs(i, j) *= p.sign[j];
    const Matrix& u = p.svd.left;
    const Matrix& v = p.svd.right;
    const auto& s = p.svd.singular;
    Matrix m = dimlift::matmul(u, gs, true, false);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) m(a, b) *= s[a];
    Matrix c(k, k);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        if (a != b) c(a, b) = s[a] * (m(a, b) - m(b, a)) / (s[b] * s[b] - s[a] * s[a]);
    Matrix inner = gs;
    matmul_acc(inner, u, c, false, false);
    matmul_acc(*gx, inner, v, false, true);
  });
}

}  // namespace dimlift::ad

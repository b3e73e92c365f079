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

#include "dimlift/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "dimlift/consistent.hpp"
#include "dimlift/error.hpp"
#include "dimlift/linalg.hpp"
#include "dimlift/rng.hpp"

namespace dimlift {
namespace {

double row_dist(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    const double d = a(i, c) - b(j, c);
    s += d * d;
  }
  return std::sqrt(s);
}

double powp(double v, double p) { return p == 1.0 ? v : (p == 2.0 ? v * v : std::pow(v, p)); }

double det_small(const Matrix& m) {
  const std::size_t k = m.rows();
  if (k == 1) return m(0, 0);
  if (k == 2) return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  if (k == 3)
    return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
           m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
           m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
  // general case via Gaussian elimination with partial pivoting
  Matrix a = m;
  double det = 1.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    if (a(piv, c) == 0.0) return 0.0;
    if (piv != c) {
      for (std::size_t j = 0; j < k; ++j) std::swap(a(c, j), a(piv, j));
      det = -det;
    }
    det *= a(c, c);
    for (std::size_t r = c + 1; r < k; ++r) {
      const double f = a(r, c) / a(c, c);
      for (std::size_t j = c; j < k; ++j) a(r, j) -= f * a(c, j);
    }
  }
  return det;
}

}  // namespace

std::uint64_t checked_lcm(std::uint64_t a, std::uint64_t b, std::uint64_t cap) {
  require(a > 0 && b > 0, ErrorCode::kInvalidInput, "empty measure");
  const std::uint64_t l = a / std::gcd(a, b) * b;
  if (l > cap)
    fail(ErrorCode::kSizeCapExceeded,
         "lcm(" + std::to_string(a) + ", " + std::to_string(b) + ") = " + std::to_string(l) +
             " exceeds cap " + std::to_string(cap));
  return l;
}

Matrix duplicate_rows(const Matrix& x, std::size_t m) {
  Matrix out(x.rows() * m, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t r = 0; r < m; ++r)
      std::copy(x.row_span(i).begin(), x.row_span(i).end(), out.row_span(i * m + r).begin());
  return out;
}

double wasserstein_1d(std::span<const double> x, std::span<const double> y, double p) {
  require(p >= 1.0, ErrorCode::kInvalidInput, "wasserstein_1d requires p >= 1");
  const std::uint64_t n = x.size(), m = y.size();
  const std::uint64_t l = checked_lcm(n, m, kMaxScalarLcm);
  std::vector<double> a(x.begin(), x.end()), b(y.begin(), y.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::uint64_t sa = l / n, sb = l / m;
  const bool inf = std::isinf(p);
  std::uint64_t pos = 0, i = 0, j = 0;
  double acc = 0.0;
  while (pos < l) {
    const std::uint64_t end = std::min((i + 1) * sa, (j + 1) * sb);
    const double d = std::abs(a[i] - b[j]);
    if (inf)
      acc = std::max(acc, d);
    else
      acc += static_cast<double>(end - pos) * powp(d, p);
    pos = end;
    if (pos == (i + 1) * sa) ++i;
    if (pos == (j + 1) * sb) ++j;
  }
  if (inf) return acc;
  return std::pow(acc / static_cast<double>(l), 1.0 / p);
}

double wasserstein_assign(const Matrix& x, const Matrix& y, double p) {
  require(std::isfinite(p) && p >= 1.0, ErrorCode::kInvalidInput,
          "wasserstein_assign requires finite p >= 1");
  require(x.cols() == y.cols(), ErrorCode::kInvalidInput, "dimension mismatch");
  const std::uint64_t l = checked_lcm(x.rows(), y.rows(), kMaxAssignLcm);
  const Matrix xd = duplicate_rows(x, l / x.rows());
  const Matrix yd = duplicate_rows(y, l / y.rows());
  Matrix cost(l, l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < l; ++j) cost(i, j) = powp(row_dist(xd, i, yd, j), p);
  const auto perm = hungarian(cost);
  return std::pow(std::max(0.0, assignment_cost(cost, perm)) / static_cast<double>(l), 1.0 / p);
}

CloudDistance sym_dist_cloud(const Matrix& x, const Matrix& y, double p, std::size_t restarts,
                             std::uint64_t seed) {
  require(std::isfinite(p) && p >= 1.0, ErrorCode::kInvalidInput, "p must be finite, >= 1");
  require(x.cols() == y.cols(), ErrorCode::kInvalidInput, "dimension mismatch");
  const std::size_t k = x.cols();
  const std::uint64_t l = checked_lcm(x.rows(), y.rows(), kMaxAssignLcm);
  const Matrix xd = duplicate_rows(x, l / x.rows());
  const Matrix yd = duplicate_rows(y, l / y.rows());

  auto objective = [&](const Matrix& h, std::vector<std::size_t>* perm_out) {
    const Matrix xh = matmul(xd, h, false, true);
    Matrix cost(l, l);
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < l; ++j) cost(i, j) = powp(row_dist(xh, i, yd, j), p);
    auto perm = hungarian(cost);
    const double v = assignment_cost(cost, perm) / static_cast<double>(l);
    if (perm_out) *perm_out = std::move(perm);
    return std::max(v, 0.0);
  };
  auto procrustes = [&](const std::vector<std::size_t>& perm, double det_sign) {
    Matrix m(k, k);  // sum_i y_{perm(i)} x_i^T
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) m(a, b) += yd(perm[i], a) * xd(i, b);
    const SvdResult s = svd(m);
    Matrix u = s.left;
    const double d = det_small(matmul(s.left, s.right, false, true));
    if (d * det_sign < 0)
      for (std::size_t a = 0; a < k; ++a) u(a, k - 1) = -u(a, k - 1);
    return matmul(u, s.right, false, true);
  };

  RngStream rng(derive_seed(seed, 0xC10D));
  CloudDistance best;
  best.value = std::numeric_limits<double>::infinity();
  // Starts: principal-axis alignments V_y S V_x^T over all sign patterns S
  // (exact for generic rotated copies), then random elements of O(k).
  const bool use_axes = k < 5 && x.rows() >= k && y.rows() >= k;
  const std::size_t axis_starts = use_axes ? (std::size_t{1} << k) : 0;
  const Matrix vx = use_axes ? svd(x).right : Matrix();
  const Matrix vy = use_axes ? svd(y).right : Matrix();
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    Matrix h;
    if (r < axis_starts) {
      Matrix vs = vy;
      for (std::size_t c = 0; c < k; ++c)
        if (r >> c & 1)
          for (std::size_t a = 0; a < k; ++a) vs(a, c) = -vs(a, c);
      h = matmul(vs, vx, false, true);
    } else {
      h = random_orthogonal(k, rng);
      if (r % 2 == 1)
        for (std::size_t a = 0; a < k; ++a) h(a, k - 1) = -h(a, k - 1);
    }
    std::vector<std::size_t> perm;
    double obj = objective(h, &perm);
    for (int it = 0; it < 200; ++it) {
      double next_obj = obj;
      Matrix next_h = h;
      std::vector<std::size_t> next_perm = perm;
      for (double sign : {1.0, -1.0}) {
        const Matrix cand = procrustes(perm, sign);
        std::vector<std::size_t> cp;
        const double co = objective(cand, &cp);
        if (co < next_obj) {
          next_obj = co;
          next_h = cand;
          next_perm = std::move(cp);
        }
      }
      const double change = obj - next_obj;
      h = std::move(next_h);
      perm = std::move(next_perm);
      obj = next_obj;
      if (change <= 1e-9) break;
    }
    if (obj < best.value) {
      best.value = obj;
      best.orth = h;
    }
  }
  best.value = std::pow(best.value, 1.0 / p);
  return best;
}

double cut_norm_exact(const Matrix& a, const Matrix& x) {
  const std::size_t n = a.rows();
  require(a.cols() == n, ErrorCode::kInvalidInput, "cut norm requires a square matrix");
  require(x.rows() == n || x.empty(), ErrorCode::kInvalidInput, "signal size mismatch");
  if (n > kMaxCutExact)
    fail(ErrorCode::kSizeCapExceeded,
         "exact cut norm limited to n <= " + std::to_string(kMaxCutExact));
  if (n == 0) return 0.0;
  const std::size_t d = x.empty() ? 0 : x.cols();
  std::vector<double> col(n, 0.0), sx(d, 0.0);
  std::vector<char> in(n, 0);
  double best_a = 0.0, best_x = 0.0;
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t g = 1; g < total; ++g) {
    const std::size_t bit = static_cast<std::size_t>(std::countr_zero(g));
    const double sgn = in[bit] ? -1.0 : 1.0;
    in[bit] = !in[bit];
    for (std::size_t j = 0; j < n; ++j) col[j] += sgn * a(bit, j);
    double pos = 0.0, neg = 0.0;
    for (double c : col) (c > 0 ? pos : neg) += c;
    best_a = std::max({best_a, pos, -neg});
    if (d) {
      double s2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        sx[c] += sgn * x(bit, c);
        s2 += sx[c] * sx[c];
      }
      best_x = std::max(best_x, std::sqrt(s2));
    }
  }
  const double dn = static_cast<double>(n);
  return std::max(best_a / (dn * dn), best_x / dn);
}

CutBounds cut_bounds(const Matrix& a, const Matrix& x) {
  const std::size_t n = a.rows();
  require(n > 0 && a.cols() == n, ErrorCode::kInvalidInput, "cut bounds need a square matrix");
  const double dn = static_cast<double>(n);
  double op_x = 0.0, full_x = 0.0;
  if (!x.empty()) {
    require(x.rows() == n, ErrorCode::kInvalidInput, "signal size mismatch");
    std::vector<double> s(x.cols(), 0.0);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < x.cols(); ++c) {
        sq += x(i, c) * x(i, c);
        s[c] += x(i, c);
      }
    op_x = std::sqrt(sq / dn);
    double s2 = 0.0;
    for (double v : s) s2 += v * v;
    full_x = std::sqrt(s2) / dn;
  }
  double total_a = 0.0;
  for (double v : a.data()) total_a += v;
  // Largest singular value; through A^T A when A is not symmetric.
  const double sigma = is_symmetric(a, 0.0) ? op_norm_2(a)
                                            : std::sqrt(op_norm_2(matmul(a, a, true, false)));
  const double op = std::max(sigma / dn, op_x);
  // S = T = [n] gives a certified value; op^2/8 is the spectral bound.
  // The certified value also caps rounding error in the operator norm.
  const double certified = std::max(std::abs(total_a) / (dn * dn), full_x);
  CutBounds b;
  b.upper = std::max(op, certified);
  b.lower = std::max(std::min(op, op * op / 8.0), certified);
  if (n <= kMaxCutExact) {
    const double e = cut_norm_exact(a, x);
    b.exact = e;
    b.lower = std::min(b.lower, e);
    b.upper = std::max(b.upper, e);
  }
  return b;
}

double hausdorff(const Matrix& x, const Matrix& y) {
  require(x.rows() > 0 && y.rows() > 0, ErrorCode::kInvalidInput, "hausdorff needs nonempty sets");
  require(x.cols() == y.cols(), ErrorCode::kInvalidInput, "dimension mismatch");
  auto directed = [](const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < b.rows(); ++j) best = std::min(best, row_dist(a, i, b, j));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(x, y), directed(y, x));
}

double gw_tlb(const Matrix& x, const Matrix& y, double p) {
  require(std::isfinite(p) && p >= 1.0, ErrorCode::kInvalidInput, "p must be finite, >= 1");
  require(x.cols() == y.cols(), ErrorCode::kInvalidInput, "dimension mismatch");
  if (x.rows() > 300 || y.rows() > 300)
    fail(ErrorCode::kSizeCapExceeded, "gw_tlb limited to 300 points per cloud");
  const std::uint64_t l = checked_lcm(x.rows(), y.rows(), kMaxAssignLcm);
  auto profiles = [](const Matrix& z) {
    std::vector<std::vector<double>> prof(z.rows(), std::vector<double>(z.rows()));
    for (std::size_t i = 0; i < z.rows(); ++i) {
      for (std::size_t j = 0; j < z.rows(); ++j) prof[i][j] = row_dist(z, i, z, j);
      std::sort(prof[i].begin(), prof[i].end());
    }
    return prof;
  };
  const auto px = profiles(x);
  const auto py = profiles(y);
  Matrix omega_p(x.rows(), y.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j)
      omega_p(i, j) = powp(wasserstein_1d(px[i], py[j], p), p);
  const std::size_t mx = l / x.rows(), my = l / y.rows();
  Matrix cost(l, l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < l; ++j) cost(i, j) = omega_p(i / mx, j / my);
  const auto perm = hungarian(cost);
  const double v = std::max(0.0, assignment_cost(cost, perm)) / static_cast<double>(l);
  return 0.5 * std::pow(v, 1.0 / p);
}

}  // namespace dimlift

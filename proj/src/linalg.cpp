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

#include "dimlift/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dimlift/error.hpp"
#include "dimlift/rng.hpp"

namespace dimlift {
namespace {

constexpr double kSignEps = 1e-12;
constexpr int kMaxSweeps = 80;

void rotate_cols(Matrix& m, std::size_t p, std::size_t q, double c, double s) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double a = m(i, p);
    const double b = m(i, q);
    m(i, p) = c * a - s * b;
    m(i, q) = s * a + c * b;
  }
}

// Gram-Schmidt completion of the columns of u flagged as missing.
void complete_basis(Matrix& u, const std::vector<bool>& have) {
  const std::size_t n = u.rows();
  std::vector<bool> ok = have;
  std::size_t probe = 0;
  for (std::size_t j = 0; j < u.cols(); ++j) {
    if (ok[j]) continue;
    for (; probe < n; ++probe) {
      std::vector<double> v(n, 0.0);
      v[probe] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t c = 0; c < u.cols(); ++c) {
          if (!ok[c]) continue;
          double d = 0.0;
          for (std::size_t i = 0; i < n; ++i) d += u(i, c) * v[i];
          for (std::size_t i = 0; i < n; ++i) v[i] -= d * u(i, c);
        }
      }
      double nv = 0.0;
      for (double x : v) nv += x * x;
      nv = std::sqrt(nv);
      if (nv > 1e-6) {
        for (std::size_t i = 0; i < n; ++i) u(i, j) = v[i] / nv;
        ok[j] = true;
        ++probe;
        break;
      }
    }
  }
}

}  // namespace

double SvdResult::gap1() const {
  double g = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < singular.size(); ++i) g = std::min(g, singular[i - 1] - singular[i]);
  return g;
}

double SvdResult::gap2() const {
  double g = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < singular.size(); ++i)
    g = std::min(g, singular[i - 1] * singular[i - 1] - singular[i] * singular[i]);
  return g;
}

Matrix SvdResult::reconstruct() const {
  Matrix us = left;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= singular[j];
  return matmul(us, right, false, true);
}

SvdResult svd(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t k = x.cols();
  require(k <= n, ErrorCode::kInvalidInput, "svd requires cols <= rows");
  require(x.all_finite(), ErrorCode::kInvalidInput, "svd input is not finite");

  Matrix w = x;
  Matrix v = Matrix::identity(k);
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < k; ++p) {
      for (std::size_t q = p + 1; q < k; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          alpha += w(i, p) * w(i, p);
          beta += w(i, q) * w(i, q);
          gamma += w(i, p) * w(i, q);
        }
        if (gamma == 0.0 || std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = c * t;
        rotate_cols(w, p, q, c, s);
        rotate_cols(v, p, q, c, s);
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sig(k);
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += w(i, j) * w(i, j);
    sig[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sig[a] > sig[b]; });

  SvdResult r;
  r.singular.resize(k);
  r.left = Matrix(n, k);
  r.right = Matrix(k, k);
  const double smax = k ? sig[order[0]] : 0.0;
  std::vector<bool> have(k, false);
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t src = order[j];
    r.singular[j] = sig[src];
    for (std::size_t i = 0; i < k; ++i) r.right(i, j) = v(i, src);
    if (sig[src] > 0.0 && sig[src] > 1e-14 * smax) {
      for (std::size_t i = 0; i < n; ++i) r.left(i, j) = w(i, src) / sig[src];
      have[j] = true;
    }
  }
  complete_basis(r.left, have);

  for (std::size_t j = 0; j < k; ++j) {
    double lead = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (std::abs(r.right(i, j)) > kSignEps) {
        lead = r.right(i, j);
        break;
      }
    }
    if (lead < 0.0) {
      for (std::size_t i = 0; i < k; ++i) r.right(i, j) = -r.right(i, j);
      for (std::size_t i = 0; i < n; ++i) r.left(i, j) = -r.left(i, j);
    }
  }
  return r;
}

double sign_stability_radius(const Matrix& x) {
  const SvdResult r = svd(x);
  const double k = static_cast<double>(x.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(x.rows()));
  double g1 = std::numeric_limits<double>::infinity();
  double g2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < r.singular.size(); ++i) {
    const double a = r.singular[i - 1] * scale;
    const double b = r.singular[i] * scale;
    g1 = std::min(g1, a - b);
    g2 = std::min(g2, a * a - b * b);
  }
  if (g1 <= 0.0 || g2 <= 0.0) return 0.0;
  double vmin = std::numeric_limits<double>::infinity();
  for (double e : r.right.data()) vmin = std::min(vmin, std::abs(e));
  const double s1 = r.singular.empty() ? 0.0 : r.singular[0] * scale;
  double radius = 1.0;
  if (std::isfinite(g1)) {
    const double b = std::sqrt(8.0) * (2.0 * s1 + 1.0) / g2;
    radius = std::min({radius, g1 / (2.0 * std::sqrt(k)), vmin / (2.0 * b)});
  }
  return radius;
}

SymEigen sym_eigen(const Matrix& a_in) {
  const std::size_t n = a_in.rows();
  require(n == a_in.cols(), ErrorCode::kInvalidInput, "sym_eigen requires a square matrix");
  Matrix a = a_in;
  Matrix v = Matrix::identity(n);
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        total += a(i, j) * a(i, j);
        if (i != j) off += a(i, j) * a(i, j);
      }
    if (off <= 1e-30 * total || off == 0.0) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(1.0, theta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = t * c;
        for (std::size_t r = 0; r < n; ++r) {
          const double arp = a(r, p), arq = a(r, q);
          a(r, p) = c * arp - s * arq;
          a(r, q) = s * arp + c * arq;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double apr = a(p, r), aqr = a(q, r);
          a(p, r) = c * apr - s * aqr;
          a(q, r) = s * apr + c * aqr;
        }
        rotate_cols(v, p, q, c, s);
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  SymEigen out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

std::vector<std::size_t> hungarian(const Matrix& cost) {
  const std::size_t n = cost.rows();
  require(n == cost.cols(), ErrorCode::kInvalidInput, "hungarian requires a square matrix");
  require(cost.all_finite(), ErrorCode::kInvalidInput, "hungarian cost is not finite");
  if (n == 0) return {};
  // Shortest augmenting paths with row/column potentials, 1-indexed.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 1; j <= n; ++j) perm[p[j] - 1] = j - 1;
  return perm;
}

double assignment_cost(const Matrix& cost, const std::vector<std::size_t>& perm) {
  double s = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) s += cost(i, perm[i]);
  return s;
}

double op_norm_2(const Matrix& a) {
  const std::size_t n = a.rows();
  require(n == a.cols(), ErrorCode::kInvalidInput, "op_norm_2 requires a square matrix");
  require(is_symmetric(a, 1e-12), ErrorCode::kInvalidInput, "op_norm_2 requires symmetry");
  if (n == 0) return 0.0;
  if (n <= 48) {
    const SymEigen e = sym_eigen(a);
    return std::max(std::abs(e.values.front()), std::abs(e.values.back()));
  }
  // Power iteration on A^2 (positive semidefinite, so no sign oscillation).
  RngStream rng(0x5EEDULL);
  std::vector<double> x(n), y(n), z(n);
  for (auto& e : x) e = 1.0 + rng.uniform();
  auto normalize = [](std::vector<double>& w) {
    double s = 0.0;
    for (double e : w) s += e * e;
    s = std::sqrt(s);
    if (s > 0) for (double& e : w) e /= s;
    return s;
  };
  auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      const double* ai = a.data().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) s += ai[j] * in[j];
      out[i] = s;
    }
  };
  normalize(x);
  double lambda = 0.0;
  for (int it = 0; it < 20000; ++it) {
    apply(x, y);
    apply(y, z);
    double rq = 0.0;
    for (std::size_t i = 0; i < n; ++i) rq += x[i] * z[i];
    const double norm = normalize(z);
    if (norm == 0.0) return 0.0;
    x.swap(z);
    if (it > 3 && std::abs(rq - lambda) <= 1e-15 * std::abs(rq)) {
      lambda = rq;
      break;
    }
    lambda = rq;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

}  // namespace dimlift

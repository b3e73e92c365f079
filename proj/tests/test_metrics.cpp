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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "dimlift/consistent.hpp"
#include "dimlift/error.hpp"
#include "dimlift/linalg.hpp"
#include "dimlift/metrics.hpp"

using namespace dimlift;

namespace {

Matrix gaussian(std::size_t r, std::size_t c, RngStream& rng) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = rng.gaussian();
  return m;
}

std::vector<double> col0(const Matrix& m) {
  std::vector<double> v(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) v[i] = m(i, 0);
  return v;
}

// Exhaustive W_p over all permutations of equally sized supports.
double brute_wasserstein(const Matrix& x, const Matrix& y, double p) {
  const std::size_t n = x.rows();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) d += std::pow(x(i, c) - y(perm[i], c), 2);
      s += std::pow(std::sqrt(d), p);
    }
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::pow(best / n, 1.0 / p);
}

// Sorted lcm duplication, written directly from the definition.
double dup_sort_wasserstein(std::vector<double> x, std::vector<double> y, double p) {
  const std::size_t l = std::lcm(x.size(), y.size());
  std::vector<double> a, b;
  for (double v : x) a.insert(a.end(), l / x.size(), v);
  for (double v : y) b.insert(b.end(), l / y.size(), v);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0.0;
  for (std::size_t i = 0; i < l; ++i) s += std::pow(std::abs(a[i] - b[i]), p);
  return std::pow(s / l, 1.0 / p);
}

double brute_cut(const Matrix& a, const Matrix& x) {
  const std::size_t n = a.rows();
  double ba = 0.0, bx = 0.0;
  for (std::uint32_t s = 0; s < (1u << n); ++s) {
    for (std::uint32_t t = 0; t < (1u << n); ++t) {
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if ((s >> i & 1) && (t >> j & 1)) v += a(i, j);
      ba = std::max(ba, std::abs(v));
    }
    double nrm = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (s >> i & 1) v += x(i, c);
      nrm += v * v;
    }
    bx = std::max(bx, std::sqrt(nrm));
  }
  return std::max(ba / (n * n), bx / n);
}

}  // namespace

TEST(Wasserstein1d, Shift) {
  const std::vector<double> x{0, 1}, y{1, 2};
  EXPECT_DOUBLE_EQ(wasserstein_1d(x, y, 1), 1.0);
}

TEST(Wasserstein1d, SameOrbit) {
  const std::vector<double> x{1, 2}, y{1, 1, 2, 2};
  for (double p : {1.0, 2.0, 3.5, double(INFINITY)}) EXPECT_EQ(wasserstein_1d(x, y, p), 0.0);
}

TEST(Wasserstein1d, MatchesAssignmentOnLcm) {
  RngStream rng(4);
  for (int t = 0; t < 10; ++t) {
    const Matrix x = gaussian(4, 1, rng), y = gaussian(6, 1, rng);
    for (double p : {1.0, 2.0, 3.0}) {
      const double w = wasserstein_1d(col0(x), col0(y), p);
      EXPECT_NEAR(w, wasserstein_assign(x, y, p), 1e-10);
      EXPECT_NEAR(w, dup_sort_wasserstein(col0(x), col0(y), p), 1e-12);
    }
  }
}

TEST(Wasserstein1d, InfinityIsMaxOfSorted) {
  const std::vector<double> x{0, 5}, y{1, 2, 3};
  // lcm 6: [0,0,0,5,5,5] vs [1,1,2,2,3,3]
  EXPECT_DOUBLE_EQ(wasserstein_1d(x, y, INFINITY), 3.0);
}

TEST(Wasserstein1d, PMonotone) {
  RngStream rng(5);
  const auto x = rng.gaussian_vec(7), y = rng.gaussian_vec(5);
  double prev = 0.0;
  for (double p : {1.0, 1.5, 2.0, 4.0, 8.0, double(INFINITY)}) {
    const double w = wasserstein_1d(x, y, p);
    EXPECT_GE(w, prev - 1e-12);
    prev = w;
  }
}

TEST(Wasserstein1d, LcmCap) {
  std::vector<double> x(999983, 0.0), y(999979, 0.0);
  try {
    wasserstein_1d(x, y, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSizeCapExceeded);
  }
}

TEST(WassersteinAssign, Basics) {
  RngStream rng(6);
  const Matrix x = gaussian(5, 2, rng);
  EXPECT_NEAR(wasserstein_assign(x, x, 2), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(wasserstein_assign(Matrix{{0, 0}}, Matrix{{3, 4}}, 2), 5.0);
  EXPECT_NEAR(wasserstein_assign(x, duplicate_rows(x, 3), 1), 0.0, 1e-15);
  EXPECT_THROW(wasserstein_assign(Matrix(1001, 1), Matrix(1003, 1), 1), Error);
}

TEST(WassersteinAssign, MatchesBruteForce) {
  RngStream rng(7);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + rng.below(7);
    const Matrix x = gaussian(n, 3, rng), y = gaussian(n, 3, rng);
    EXPECT_NEAR(wasserstein_assign(x, y, 2), brute_wasserstein(x, y, 2), 1e-10);
    EXPECT_NEAR(wasserstein_assign(x, y, 1), brute_wasserstein(x, y, 1), 1e-10);
  }
}

TEST(MetricAxioms, RandomTriples) {
  RngStream rng(8);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = gaussian(3, 2, rng), b = gaussian(4, 2, rng), c = gaussian(6, 2, rng);
    auto check = [](auto dist) {
      EXPECT_NEAR(dist(0, 1), dist(1, 0), 1e-9);
      EXPECT_LE(dist(0, 2), dist(0, 1) + dist(1, 2) + 1e-9);
    };
    const Matrix* m[3] = {&a, &b, &c};
    check([&](int i, int j) { return wasserstein_assign(*m[i], *m[j], 2); });
    check([&](int i, int j) { return hausdorff(*m[i], *m[j]); });
    check([&](int i, int j) { return wasserstein_1d(col0(*m[i]), col0(*m[j]), 1.5); });
  }
}

TEST(SymDistCloud, RotatedCopy) {
  RngStream rng(9);
  for (std::size_t k : {2u, 3u}) {
    const Matrix x = gaussian(6, k, rng);
    const Matrix h = random_orthogonal(k, rng);
    Matrix y = matmul(x, h, false, true);
    y = gather_rows(y, std::vector<std::size_t>{3, 1, 0, 5, 4, 2});
    const auto r = sym_dist_cloud(x, y, 2, 8);
    EXPECT_LE(r.value, 1e-6);
    EXPECT_TRUE(r.heuristic);
  }
}

TEST(SymDistCloud, DuplicatedCopy) {
  RngStream rng(10);
  const Matrix x = gaussian(5, 3, rng);
  EXPECT_LE(sym_dist_cloud(x, duplicate_rows(x, 3), 2).value, 1e-6);
}

TEST(SymDistCloud, MatchesGridOracle) {
  RngStream rng(11);
  for (int t = 0; t < 5; ++t) {
    const Matrix x = gaussian(3, 2, rng), y = gaussian(3, 2, rng);
    // objective for a given angle, reflection and permutation
    auto cost = [&](double th, bool refl) {
      const double c = std::cos(th), s = std::sin(th);
      Matrix h{{c, -s}, {s, c}};
      if (refl) h = Matrix{{c, s}, {s, -c}};
      const Matrix xh = matmul(x, h, false, true);
      return brute_wasserstein(xh, y, 2);
    };
    double best = INFINITY;
    for (bool refl : {false, true}) {
      double b_th = 0.0, b_v = INFINITY;
      for (int g = 0; g < 1800; ++g) {
        const double th = 2.0 * std::numbers::pi * g / 1800;
        const double v = cost(th, refl);
        if (v < b_v) b_v = v, b_th = th;
      }
      double lo = b_th - 2.0 * std::numbers::pi / 1800, hi = b_th + 2.0 * std::numbers::pi / 1800;
      for (int it = 0; it < 200; ++it) {
        const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
        (cost(m1, refl) < cost(m2, refl) ? hi : lo) = (cost(m1, refl) < cost(m2, refl) ? m2 : m1);
      }
      best = std::min({best, b_v, cost(0.5 * (lo + hi), refl)});
    }
    EXPECT_NEAR(sym_dist_cloud(x, y, 2).value, best, 1e-6);
  }
}

TEST(CutNorm, Examples) {
  EXPECT_DOUBLE_EQ(cut_norm_exact(Matrix::ones(5, 5), Matrix(5, 0)), 1.0);
  EXPECT_DOUBLE_EQ(cut_norm_exact(Matrix{{1, -1}, {-1, 1}}, Matrix(2, 0)), 0.25);
  EXPECT_DOUBLE_EQ(cut_norm_exact(Matrix(2, 2), Matrix{{1}, {-1}}), 0.5);
}

TEST(CutNorm, MatchesBruteForce) {
  RngStream rng(12);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + rng.below(6);
    Matrix a(n, n), x(n, 2);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) a(i, j) = a(j, i) = rng.uniform(-1, 1);
    for (auto& v : x.data()) v = rng.uniform(-1, 1);
    EXPECT_NEAR(cut_norm_exact(a, x), brute_cut(a, x), 1e-12);
  }
}

TEST(CutBounds, Examples) {
  const auto ones = cut_bounds(Matrix::ones(4, 4), Matrix(4, 0));
  EXPECT_NEAR(ones.upper, 1.0, 1e-12);
  EXPECT_NEAR(ones.lower, 1.0, 1e-12);
  EXPECT_NEAR(*ones.exact, 1.0, 1e-12);
  const auto zero = cut_bounds(Matrix(3, 3), Matrix(3, 1));
  EXPECT_EQ(zero.lower, 0.0);
  EXPECT_EQ(zero.upper, 0.0);
  EXPECT_EQ(*zero.exact, 0.0);
  const auto big = cut_bounds(Matrix::ones(20, 20), Matrix(20, 0));
  EXPECT_FALSE(big.exact.has_value());
}

TEST(CutBounds, Bracket) {
  RngStream rng(13);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 1 + rng.below(10);
    Matrix a(n, n), x(n, 1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) a(i, j) = a(j, i) = rng.uniform(-1, 1);
    for (auto& v : x.data()) v = rng.uniform(-1, 1);
    const auto b = cut_bounds(a, x);
    EXPECT_LE(b.lower, *b.exact + 1e-12);
    EXPECT_LE(*b.exact, b.upper + 1e-12);
    const double op = std::max(op_norm_2(a) / n, norm(SizedObject::set(x), NormKind::normalized_lp(2)));
    EXPECT_NEAR(b.upper, op, 1e-12);
  }
}

TEST(CutBounds, NonSymmetricUsesLargestSingularValue) {
  // [[0, 1], [0, 0]] has eigenvalues 0 but singular value 1.
  const auto b = cut_bounds(Matrix{{0, 1}, {0, 0}}, Matrix(2, 0));
  EXPECT_NEAR(b.upper, 0.5, 1e-12);
  EXPECT_NEAR(*b.exact, 0.25, 1e-12);
  EXPECT_LE(b.lower, 0.25);
  RngStream rng(15);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + rng.below(8);
    Matrix a(n, n);
    for (auto& v : a.data()) v = rng.uniform(-1, 1);
    const auto c = cut_bounds(a, Matrix(n, 0));
    EXPECT_LE(c.lower, *c.exact + 1e-12);
    EXPECT_LE(*c.exact, c.upper + 1e-12);
  }
}

TEST(Hausdorff, Examples) {
  RngStream rng(14);
  const Matrix x = gaussian(4, 2, rng);
  Matrix y(5, 2);
  for (std::size_t i = 0; i < 4; ++i) y(i, 0) = x(i, 0), y(i, 1) = x(i, 1);
  // far point at distance 5 from its nearest neighbour x_0
  y(4, 0) = x(0, 0) + 100, y(4, 1) = x(0, 1);
  const double near = hausdorff(x, y);
  EXPECT_NEAR(near, 100.0, 5.0);
  EXPECT_EQ(hausdorff(x, x), 0.0);
  const Matrix a{{0}, {1}}, b{{0}, {1}, {6}};
  EXPECT_DOUBLE_EQ(hausdorff(a, b), 5.0);
}

TEST(Hausdorff, ShuffledBruteForce) {
  RngStream rng(15);
  for (int t = 0; t < 10; ++t) {
    const Matrix x = gaussian(7, 1, rng), y = gaussian(5, 1, rng);
    auto xs = col0(x), ys = col0(y);
    std::reverse(xs.begin(), xs.end());
    std::rotate(ys.begin(), ys.begin() + 2, ys.end());
    double d1 = 0, d2 = 0;
    for (double a : xs) {
      double m = INFINITY;
      for (double b : ys) m = std::min(m, std::abs(a - b));
      d1 = std::max(d1, m);
    }
    for (double b : ys) {
      double m = INFINITY;
      for (double a : xs) m = std::min(m, std::abs(a - b));
      d2 = std::max(d2, m);
    }
    EXPECT_DOUBLE_EQ(hausdorff(x, y), std::max(d1, d2));
  }
}

TEST(GwTlb, Examples) {
  RngStream rng(16);
  const Matrix x = gaussian(6, 3, rng);
  EXPECT_EQ(gw_tlb(x, x, 2), 0.0);
  // profiles {0,1} and {0,2} give Omega = 0.5; with the 1/2 factor TLB = 0.25
  EXPECT_DOUBLE_EQ(gw_tlb(Matrix{{0}, {1}}, Matrix{{0}, {2}}, 1), 0.25);
  const Matrix h = random_orthogonal(3, rng);
  Matrix y = matmul(x, h, false, true);
  for (std::size_t i = 0; i < y.rows(); ++i) y(i, 0) += 3.0, y(i, 2) -= 1.0;
  EXPECT_LE(gw_tlb(x, y, 2), 1e-9);
  EXPECT_NEAR(gw_tlb(x, duplicate_rows(x, 2), 2), 0.0, 1e-12);
}

TEST(GwTlb, LipschitzAndBelowWasserstein) {
  RngStream rng(17);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = gaussian(4, 2, rng), b = gaussian(4, 2, rng);
    Matrix a2 = a, b2 = b;
    for (auto& v : a2.data()) v += 0.3 * rng.gaussian();
    for (auto& v : b2.data()) v += 0.3 * rng.gaussian();
    for (double p : {1.0, 2.0}) {
      const double lhs = std::abs(gw_tlb(a, b, p) - gw_tlb(a2, b2, p));
      EXPECT_LE(lhs, wasserstein_assign(a, a2, p) + wasserstein_assign(b, b2, p) + 1e-9);
      EXPECT_LE(gw_tlb(a, b, p), wasserstein_assign(a, b, p) + 1e-9);
    }
  }
}

TEST(GwTlb, SizeCap) {
  EXPECT_THROW(gw_tlb(Matrix(301, 2), Matrix(2, 2), 1), Error);
}

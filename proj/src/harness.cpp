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

#include "dimlift/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dimlift/error.hpp"
#include "dimlift/parallel.hpp"

namespace dimlift {

double SignalFn::operator()(double t) const {
  switch (kind) {
    case Kind::kConstant: return a;
    case Kind::kLinear: return a + b * t;
    case Kind::kSine: return a * std::sin(2.0 * std::numbers::pi * b * t);
  }
  return 0.0;
}

double SignalFn::mean(double t0, double t1) const {
  switch (kind) {
    case Kind::kConstant: return a;
    case Kind::kLinear: return a + b * 0.5 * (t0 + t1);
    case Kind::kSine: {
      const double w = 2.0 * std::numbers::pi * b;
      if (w == 0.0 || t1 == t0) return (*this)(t0);
      return a * (std::cos(w * t0) - std::cos(w * t1)) / (w * (t1 - t0));
    }
  }
  return 0.0;
}

namespace {

std::vector<double> block_edges(const Graphon& g) {
  std::vector<double> edges{0.0};
  if (g.kind == Graphon::Kind::kTable) {
    const std::size_t k = g.p.rows();
    for (std::size_t i = 1; i <= k; ++i) edges.push_back(static_cast<double>(i) / k);
  } else {
    double acc = 0.0;
    for (double v : g.gamma) edges.push_back(acc += v);
  }
  edges.back() = 1.0;
  return edges;
}

std::size_t block_of(const std::vector<double>& edges, double x) {
  const auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, x);
  return static_cast<std::size_t>(it - edges.begin()) - 1;
}

}  // namespace

void Graphon::validate() const {
  if (kind == Kind::kConstant) {
    require(c >= 0.0 && c <= 1.0, ErrorCode::kConfigError, "graphon: constant outside [0,1]");
    return;
  }
  require(p.rows() > 0 && p.rows() == p.cols(), ErrorCode::kConfigError,
          "graphon: block matrix must be square");
  require(is_symmetric(p, 0.0), ErrorCode::kConfigError, "graphon: block matrix must be symmetric");
  for (double v : p.data())
    require(v >= 0.0 && v <= 1.0, ErrorCode::kConfigError, "graphon: values outside [0,1]");
  if (kind == Kind::kSbm) {
    require(gamma.size() == p.rows(), ErrorCode::kConfigError,
            "graphon: gamma length must match block count");
    double s = 0.0;
    for (double v : gamma) {
      require(v > 0.0, ErrorCode::kConfigError, "graphon: gamma entries must be positive");
      s += v;
    }
    require(std::abs(s - 1.0) < 1e-9, ErrorCode::kConfigError, "graphon: gamma must sum to 1");
  }
}

double Graphon::operator()(double x, double y) const {
  if (kind == Kind::kConstant) return c;
  const auto edges = block_edges(*this);
  return p(block_of(edges, x), block_of(edges, y));
}

double Graphon::cell_mean(double x0, double x1, double y0, double y1) const {
  if (kind == Kind::kConstant) return c;
  const auto edges = block_edges(*this);
  const std::size_t k = p.rows();
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double ox = std::max(0.0, std::min(x1, edges[i + 1]) - std::max(x0, edges[i]));
    if (ox == 0.0) continue;
    for (std::size_t j = 0; j < k; ++j) {
      const double oy = std::max(0.0, std::min(y1, edges[j + 1]) - std::max(y0, edges[j]));
      acc += ox * oy * p(i, j);
    }
  }
  return acc / ((x1 - x0) * (y1 - y0));
}

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::kIidEmpirical: return "iid";
    case Scheme::kGraphonBernoulli: return "graphon-bernoulli";
    case Scheme::kUniformGrid: return "uniform-grid";
    case Scheme::kLocalAverage: return "local-average";
  }
  return "?";
}

Scheme parse_scheme(const std::string& s) {
  for (Scheme v : {Scheme::kIidEmpirical, Scheme::kGraphonBernoulli, Scheme::kUniformGrid,
                   Scheme::kLocalAverage})
    if (to_string(v) == s) return v;
  fail(ErrorCode::kConfigError, "unknown sampling scheme '" + s + "'");
}

void SamplerSpec::validate() const {
  using K = Limit::Kind;
  const K k = limit.kind;
  bool ok = false;
  switch (scheme) {
    case Scheme::kIidEmpirical: ok = k != K::kGraphon; break;
    case Scheme::kGraphonBernoulli: ok = k == K::kGraphon; break;
    case Scheme::kUniformGrid:
    case Scheme::kLocalAverage: ok = k == K::kGraphon || k == K::kFunction; break;
  }
  require(ok, ErrorCode::kConfigError, "sampling scheme " + to_string(scheme) +
                                           " is not admissible for this limit object");
  if (k == K::kGraphon) limit.w.validate();
  if (k == K::kScalarGaussian)
    require(limit.b >= 0.0, ErrorCode::kConfigError, "gaussian sd must be nonnegative");
  if (k == K::kScalarUniform)
    require(limit.a <= limit.b, ErrorCode::kConfigError, "uniform needs lo <= hi");
  if (k == K::kGaussianVec)
    require(limit.chol.rows() > 0 && limit.chol.rows() == limit.chol.cols(),
            ErrorCode::kConfigError, "gaussian vector needs a square factor");
  if (k == K::kCloud) {
    require(limit.means.rows() > 0 && limit.means.rows() == limit.weights.size(),
            ErrorCode::kConfigError, "cloud mixture needs one weight per component");
    for (double w : limit.weights)
      require(w >= 0.0, ErrorCode::kConfigError, "cloud mixture weights must be nonnegative");
  }
}

SizedObject SamplerSpec::sample(std::size_t n, std::size_t trial) const {
  validate();
  require(n >= 1, ErrorCode::kInvalidInput, "sample size must be positive");
  RngStream rng(derive_seed(derive_seed(seed, n), trial));
  using K = Limit::Kind;
  const Limit& L = limit;
  const double dn = static_cast<double>(n);
  if (L.kind == K::kGraphon) {
    Matrix a(n, n), x(n, 1);
    if (scheme == Scheme::kGraphonBernoulli) {
      std::vector<double> u = rng.uniform_vec(n);
      for (std::size_t i = 0; i < n; ++i) x[i] = L.f(u[i]);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          a(i, j) = a(j, i) = rng.uniform() < L.w(u[i], u[j]) ? 1.0 : 0.0;
    } else if (scheme == Scheme::kUniformGrid) {
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = L.f(i / dn);
        for (std::size_t j = 0; j < n; ++j) a(i, j) = L.w(i / dn, j / dn);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = L.f.mean(i / dn, (i + 1) / dn);
        for (std::size_t j = 0; j < n; ++j)
          a(i, j) = L.w.cell_mean(i / dn, (i + 1) / dn, j / dn, (j + 1) / dn);
      }
    }
    return SizedObject::graph(std::move(a), std::move(x));
  }
  switch (L.kind) {
    case K::kScalarGaussian: {
      Matrix x(n, 1);
      for (double& v : x.data()) v = rng.gaussian(L.a, L.b);
      return SizedObject::set(std::move(x));
    }
    case K::kScalarUniform: {
      Matrix x(n, 1);
      for (double& v : x.data()) v = rng.uniform(L.a, L.b);
      return SizedObject::set(std::move(x));
    }
    case K::kGaussianVec: {
      const std::size_t d = L.chol.rows();
      Matrix x(n, d);
      std::vector<double> z(d);
      for (std::size_t i = 0; i < n; ++i) {
        for (double& v : z) v = rng.gaussian();
        for (std::size_t r = 0; r < d; ++r) {
          double acc = 0.0;
          for (std::size_t c = 0; c < d; ++c) acc += L.chol(r, c) * z[c];
          x(i, r) = acc;
        }
      }
      return SizedObject::set(std::move(x));
    }
    case K::kFunction: {
      Matrix x(n, 1);
      for (std::size_t i = 0; i < n; ++i) {
        if (scheme == Scheme::kIidEmpirical) x[i] = L.f(rng.uniform());
        else if (scheme == Scheme::kUniformGrid) x[i] = L.f(i / dn);
        else x[i] = L.f.mean(i / dn, (i + 1) / dn);
      }
      return SizedObject::set(std::move(x));
    }
    case K::kCloud: {
      const std::size_t k = L.means.cols();
      double total = 0.0;
      for (double w : L.weights) total += w;
      Matrix x(n, k);
      for (std::size_t i = 0; i < n; ++i) {
        double u = rng.uniform() * total;
        std::size_t comp = 0;
        while (comp + 1 < L.weights.size() && u >= L.weights[comp]) u -= L.weights[comp++];
        for (std::size_t c = 0; c < k; ++c) x(i, c) = L.means(comp, c) + L.sd * rng.gaussian();
      }
      return SizedObject::cloud(std::move(x));
    }
    default: break;
  }
  fail(ErrorCode::kInvalidInput, "unreachable");
}

double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, ErrorCode::kInvalidInput, "normal_quantile: p must be in (0,1)");
  // Acklam's rational approximation followed by one Halley step.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01, -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - plow) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

RateFit fit_rate(const std::vector<double>& sizes, const std::vector<double>& medians) {
  require(sizes.size() == medians.size(), ErrorCode::kInvalidInput, "fit_rate: length mismatch");
  for (std::size_t i = 1; i < sizes.size(); ++i)
    require(sizes[i] > sizes[i - 1], ErrorCode::kInvalidInput,
            "fit_rate: sizes must be strictly increasing");
  RateFit r;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (!(medians[i] > 0.0) || !std::isfinite(medians[i])) {
      r.dropped.push_back(i);
      continue;
    }
    xs.push_back(std::log(sizes[i]));
    ys.push_back(std::log(medians[i]));
  }
  require(xs.size() >= 4, ErrorCode::kFitError,
          "fit_rate: need at least 4 positive medians, have " + std::to_string(xs.size()));
  const double m = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  double ss = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (r.intercept + r.slope * xs[i]);
    ss += e * e;
  }
  r.residual = std::sqrt(ss / m);
  return r;
}

void summarize(std::vector<double> v, double& median, double& lo, double& hi) {
  require(!v.empty(), ErrorCode::kInvalidInput, "summarize: empty sample");
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const std::size_t i = static_cast<std::size_t>(std::floor(pos));
    const double f = pos - static_cast<double>(i);
    return i + 1 < v.size() ? v[i] * (1 - f) + v[i + 1] * f : v[i];
  };
  median = q(0.5);
  lo = q(0.1);
  hi = q(0.9);
}

namespace {

double median_of(std::vector<double> v) {
  double m, lo, hi;
  summarize(std::move(v), m, lo, hi);
  return m;
}

}  // namespace

TransferResult run_transfer(const Model& model, const ParamStore& ps, const SamplerSpec& sampler,
                            const TransferSpec& spec) {
  require(!spec.sizes.empty() && spec.trials > 0, ErrorCode::kConfigError,
          "transfer: need sizes and trials");
  for (std::size_t i = 1; i < spec.sizes.size(); ++i)
    require(spec.sizes[i] > spec.sizes[i - 1], ErrorCode::kConfigError,
            "transfer: sizes must be strictly increasing");
  sampler.validate();
  const bool invariant = is_invariant(model.spec().family);
  const std::size_t ns = spec.sizes.size(), nt = spec.trials;
  std::vector<Matrix> outs(ns * nt);
  parallel_for(ns * nt, [&](std::size_t job) {
    const std::size_t n = spec.sizes[job / nt];
    outs[job] = model.predict(ps, sampler.sample(n, job % nt));
  });
  const std::size_t d = outs[0].cols();

  TransferResult res;
  if (spec.reference == TransferSpec::Reference::kGiven) {
    require(spec.given.rows() == 1 && spec.given.cols() == d, ErrorCode::kConfigError,
            "transfer: reference must be a row of length " + std::to_string(d));
    res.reference = spec.given;
  } else {
    res.reference = Matrix(1, d);
    for (std::size_t c = 0; c < d; ++c) {
      std::vector<double> v;
      for (std::size_t t = 0; t < nt; ++t) {
        const Matrix& o = outs[(ns - 1) * nt + t];
        double m = 0.0;
        for (std::size_t i = 0; i < o.rows(); ++i) m += o(i, c);
        v.push_back(m / static_cast<double>(o.rows()));
      }
      res.reference[c] = median_of(v);
    }
  }

  for (std::size_t s = 0; s < ns; ++s) {
    std::vector<double> dist, absval;
    for (std::size_t t = 0; t < nt; ++t) {
      const Matrix& o = outs[s * nt + t];
      TransferRecord r{spec.sizes[s], t, 0.0, 0.0};
      double dd = 0.0, vv = 0.0;
      for (std::size_t i = 0; i < o.rows(); ++i)
        for (std::size_t c = 0; c < d; ++c) {
          dd += (o(i, c) - res.reference[c]) * (o(i, c) - res.reference[c]);
          vv += o(i, c) * o(i, c);
        }
      const double rows = static_cast<double>(o.rows());
      r.value = invariant ? o[0] : std::sqrt(vv / rows);
      r.distance = std::sqrt(dd / rows);
      dist.push_back(r.distance);
      absval.push_back(std::abs(r.value));
      res.records.push_back(r);
    }
    double m, lo, hi;
    summarize(dist, m, lo, hi);
    res.rate.sizes.push_back(spec.sizes[s]);
    res.rate.median.push_back(m);
    res.rate.lo.push_back(lo);
    res.rate.hi.push_back(hi);
    res.median_abs_value.push_back(median_of(absval));
  }
  if (spec.fit) {
    try {
      std::vector<double> sz(spec.sizes.begin(), spec.sizes.end());
      res.rate.fit = fit_rate(sz, res.rate.median);
      res.rate.fitted = true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kFitError) throw;
      res.rate.fit_error = e.what();
    }
  }
  const auto& mv = res.median_abs_value;
  res.diverged = mv.size() >= 2 && mv.back() >= 10.0 * mv.front();
  for (std::size_t i = 1; i < mv.size(); ++i) res.diverged = res.diverged && mv[i] >= mv[i - 1];
  return res;
}

Matrix mean_aggregate_limit(const Model& model, const ParamStore& ps, std::size_t count,
                            const std::function<double(std::size_t)>& node) {
  const ModelSpec& s = model.spec();
  require(s.family == Family::kNormDeepSet && s.in_dim == 1, ErrorCode::kInvalidInput,
          "limit value needs a scalar normalized DeepSet");
  require(count > 0, ErrorCode::kInvalidInput, "limit value needs nodes");
  constexpr std::size_t kChunk = 1 << 15;
  Matrix acc(1, s.widths.back());
  for (std::size_t b = 0; b < count; b += kChunk) {
    const std::size_t e = std::min(count, b + kChunk);
    Matrix x(e - b, 1);
    for (std::size_t i = b; i < e; ++i) x[i - b] = node(i);
    const Matrix h = mlp_forward(ps, "rho", s.widths.size(), x, s.act, false, s.rho_bias);
    for (std::size_t i = 0; i < h.rows(); ++i)
      for (std::size_t j = 0; j < h.cols(); ++j) acc[j] += h(i, j);
  }
  acc *= 1.0 / static_cast<double>(count);
  return mlp_forward(ps, "sigma", s.head.size() + 1, acc, s.act, false, true);
}

Matrix set_limit_value(const Model& model, const ParamStore& ps, const Limit& limit,
                       std::size_t nodes) {
  const double m = static_cast<double>(nodes);
  switch (limit.kind) {
    case Limit::Kind::kScalarGaussian:
      return mean_aggregate_limit(model, ps, nodes, [&](std::size_t i) {
        return limit.a + limit.b * normal_quantile((i + 0.5) / m);
      });
    case Limit::Kind::kScalarUniform:
      return mean_aggregate_limit(model, ps, nodes, [&](std::size_t i) {
        return limit.a + (limit.b - limit.a) * (i + 0.5) / m;
      });
    case Limit::Kind::kFunction:
      return mean_aggregate_limit(model, ps, nodes,
                                  [&](std::size_t i) { return limit.f((i + 0.5) / m); });
    default: fail(ErrorCode::kInvalidInput, "no quadrature limit for this object");
  }
}

double w1_empirical(std::vector<double> x, std::vector<double> y) {
  require(!x.empty() && !y.empty(), ErrorCode::kInvalidInput, "w1_empirical: empty sample");
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double wx = 1.0 / static_cast<double>(x.size()), wy = 1.0 / static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double fx = 0.0, fy = 0.0, acc = 0.0;
  double pos = std::min(x[0], y[0]);
  while (i < x.size() || j < y.size()) {
    const double next = (j >= y.size() || (i < x.size() && x[i] <= y[j])) ? x[i] : y[j];
    acc += std::abs(fx - fy) * (next - pos);
    pos = next;
    while (i < x.size() && x[i] == pos) {
      fx += wx;
      ++i;
    }
    while (j < y.size() && y[j] == pos) {
      fy += wy;
      ++j;
    }
  }
  return acc;
}

}  // namespace dimlift

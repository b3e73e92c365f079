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

#include "dimlift/consistent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dimlift/error.hpp"
#include "dimlift/linalg.hpp"
#include "dimlift/metrics.hpp"

namespace dimlift {
namespace {

std::vector<double> row_norms(const Matrix& x) {
  std::vector<double> out(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row_span(i)) s += v * v;
    out[i] = std::sqrt(s);
  }
  return out;
}

// (scale * sum |v|^p)^(1/p), or max |v| for p = infinity.
double pnorm(const std::vector<double>& v, double p, double scale) {
  if (std::isinf(p)) {
    double m = 0.0;
    for (double e : v) m = std::max(m, std::abs(e));
    return m;
  }
  double s = 0.0;
  for (double e : v) s += std::pow(std::abs(e), p);
  return std::pow(scale * s, 1.0 / p);
}

double normalized_rows(const Matrix& x, double p) {
  if (x.rows() == 0 || x.cols() == 0) return 0.0;
  return pnorm(row_norms(x), p, 1.0 / static_cast<double>(x.rows()));
}

double max_row_abs_sum(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row_span(i)) s += std::abs(v);
    m = std::max(m, s);
  }
  return m;
}

SizedObject apply_perm(const std::vector<std::size_t>& perm, const SizedObject& x) {
  SizedObject out = x;
  out.x = gather_rows(x.x, perm);
  if (x.kind == ObjectKind::kGraph) {
    const std::size_t n = perm.size();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out.a(i, j) = x.a(perm[i], perm[j]);
  }
  return out;
}

double output_norm(const SizedObject& y, const CompatModel& model) {
  if (!model.out_seq) return frobenius(y.x) + (y.kind == ObjectKind::kGraph ? frobenius(y.a) : 0);
  return norm(y, model.out_norm);
}

double difference_norm(const SizedObject& u, const SizedObject& v, const CompatModel& model) {
  require(u.x.same_shape(v.x) && u.a.same_shape(v.a), ErrorCode::kInvalidInput,
          "model outputs have mismatched shapes");
  SizedObject d = u;
  d.x -= v.x;
  if (u.kind == ObjectKind::kGraph) d.a -= v.a;
  return output_norm(d, model);
}

}  // namespace

SizedObject SizedObject::set(Matrix x) {
  SizedObject o;
  o.kind = ObjectKind::kSet;
  o.x = std::move(x);
  return o;
}

SizedObject SizedObject::graph(Matrix a, Matrix x) {
  SizedObject o;
  o.kind = ObjectKind::kGraph;
  o.a = std::move(a);
  o.x = x.rows() == 0 && x.cols() == 0 ? Matrix(o.a.rows(), 0) : std::move(x);
  o.validate();
  return o;
}

SizedObject SizedObject::cloud(Matrix x) {
  SizedObject o;
  o.kind = ObjectKind::kCloud;
  o.x = std::move(x);
  return o;
}

void SizedObject::validate() const {
  require(n() >= 1, ErrorCode::kInvalidInput, "sized object must have n >= 1");
  if (kind == ObjectKind::kGraph) {
    require(a.rows() == a.cols(), ErrorCode::kInvalidInput, "adjacency must be square");
    require(x.rows() == a.rows(), ErrorCode::kInvalidInput, "signal rows must match adjacency");
    require(is_symmetric(a, 1e-12), ErrorCode::kInvalidInput, "adjacency must be symmetric");
  }
}

GroupElement GroupElement::identity(std::size_t n) {
  GroupElement g;
  g.perm.resize(n);
  std::iota(g.perm.begin(), g.perm.end(), 0);
  return g;
}

Matrix random_orthogonal(std::size_t k, RngStream& rng) {
  Matrix g(k, k);
  for (auto& v : g.data()) v = rng.gaussian();
  for (std::size_t j = 0; j < k; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t c = 0; c < j; ++c) {
        double d = 0.0;
        for (std::size_t i = 0; i < k; ++i) d += g(i, j) * g(i, c);
        for (std::size_t i = 0; i < k; ++i) g(i, j) -= d * g(i, c);
      }
    }
    double nrm = 0.0;
    for (std::size_t i = 0; i < k; ++i) nrm += g(i, j) * g(i, j);
    nrm = std::sqrt(nrm);
    for (std::size_t i = 0; i < k; ++i) g(i, j) /= nrm;
  }
  return g;
}

GroupElement GroupElement::random(std::size_t n, std::optional<std::size_t> k, RngStream& rng) {
  GroupElement g = identity(n);
  for (std::size_t i = n; i > 1; --i) std::swap(g.perm[i - 1], g.perm[rng.below(i)]);
  if (k) g.orth = random_orthogonal(*k, rng);
  return g;
}

std::string to_string(SequenceKind s) {
  switch (s) {
    case SequenceKind::kZeroPadSet: return "zero-set";
    case SequenceKind::kDupSet: return "dup-set";
    case SequenceKind::kDupGraph: return "dup-graph";
    case SequenceKind::kDupPointCloud: return "dup-cloud";
  }
  return "?";
}

std::string to_string(NormKind k) {
  std::ostringstream os;
  switch (k.tag) {
    case NormKind::Tag::kLp: os << "lp"; break;
    case NormKind::Tag::kNormalizedLp: os << "normalized-lp"; break;
    case NormKind::Tag::kGraphP: os << "graph-p"; break;
    case NormKind::Tag::kGraphOpP: os << "graph-op"; break;
    case NormKind::Tag::kCut: return "cut";
  }
  os << "(" << (std::isinf(k.p) ? std::string("inf") : std::to_string(k.p)) << ")";
  return os.str();
}

bool admissible(SequenceKind seq, NormKind k) {
  using T = NormKind::Tag;
  switch (seq) {
    case SequenceKind::kZeroPadSet: return k.tag == T::kLp;
    case SequenceKind::kDupSet:
    case SequenceKind::kDupPointCloud: return k.tag == T::kNormalizedLp;
    case SequenceKind::kDupGraph:
      return k.tag == T::kGraphP || k.tag == T::kGraphOpP || k.tag == T::kCut;
  }
  return false;
}

bool admissible(SequenceKind seq, ObjectKind kind) {
  switch (seq) {
    case SequenceKind::kZeroPadSet:
    case SequenceKind::kDupSet: return kind == ObjectKind::kSet;
    case SequenceKind::kDupGraph: return kind == ObjectKind::kGraph;
    case SequenceKind::kDupPointCloud: return kind == ObjectKind::kCloud;
  }
  return false;
}

SizedObject embed(const SizedObject& x, SequenceKind seq, std::size_t target) {
  require(admissible(seq, x.kind), ErrorCode::kEmbedError,
          "sequence " + to_string(seq) + " does not accept this object kind");
  const std::size_t n = x.n();
  if (seq == SequenceKind::kZeroPadSet) {
    require(target >= n, ErrorCode::kEmbedError, "zero padding needs N >= n");
    Matrix out(target, x.x.cols());
    std::copy(x.x.data().begin(), x.x.data().end(), out.data().begin());
    return SizedObject::set(std::move(out));
  }
  require(n > 0 && target % n == 0, ErrorCode::kEmbedError,
          "duplication needs n | N (n = " + std::to_string(n) + ", N = " + std::to_string(target) +
              ")");
  const std::size_t m = target / n;
  SizedObject out = x;
  out.x = duplicate_rows(x.x, m);
  if (seq == SequenceKind::kDupGraph) {
    out.a = Matrix(target, target);
    for (std::size_t i = 0; i < target; ++i)
      for (std::size_t j = 0; j < target; ++j) out.a(i, j) = x.a(i / m, j / m);
  }
  return out;
}

SizedObject act(const GroupElement& g, const SizedObject& x) {
  require(g.perm.size() == x.n(), ErrorCode::kInvalidInput, "group element size mismatch");
  SizedObject out = apply_perm(g.perm, x);
  if (g.orth && x.kind == ObjectKind::kCloud) {
    require(g.orth->rows() == x.x.cols(), ErrorCode::kInvalidInput, "orthogonal size mismatch");
    out.x = matmul(out.x, *g.orth, false, true);
  }
  return out;
}

GroupElement embed_group(const GroupElement& g, std::size_t m) {
  GroupElement out;
  out.orth = g.orth;
  out.perm.resize(g.perm.size() * m);
  for (std::size_t i = 0; i < g.perm.size(); ++i)
    for (std::size_t r = 0; r < m; ++r) out.perm[i * m + r] = g.perm[i] * m + r;
  return out;
}

double norm(const SizedObject& x, NormKind k) {
  using T = NormKind::Tag;
  const bool graph = x.kind == ObjectKind::kGraph;
  const bool graph_norm = k.tag == T::kGraphP || k.tag == T::kGraphOpP || k.tag == T::kCut;
  require(graph == graph_norm, ErrorCode::kNormError,
          "norm " + to_string(k) + " is not defined for this object kind");
  require(k.p >= 1.0, ErrorCode::kNormError, "norm exponent must be >= 1");
  const double n = static_cast<double>(x.n());
  switch (k.tag) {
    case T::kLp: return pnorm(row_norms(x.x), k.p, 1.0);
    case T::kNormalizedLp: return normalized_rows(x.x, k.p);
    case T::kGraphP: {
      const double a = pnorm(x.a.data(), k.p, 1.0 / (n * n));
      return std::max(a, normalized_rows(x.x, k.p));
    }
    case T::kGraphOpP: {
      double a = 0.0;
      if (k.p == 2.0)
        a = op_norm_2(x.a) / n;
      else if (k.p == 1.0 || std::isinf(k.p))
        a = max_row_abs_sum(x.a) / n;
      else
        fail(ErrorCode::kNormError, "operator norm implemented for p in {1, 2, inf}");
      return std::max(a, normalized_rows(x.x, k.p));
    }
    case T::kCut: return cut_norm_exact(x.a, x.x);
  }
  return 0.0;
}

CheckReport check_compatibility(const CompatModel& model,
                                const std::function<SizedObject(RngStream&)>& sampler,
                                SequenceKind seq, const std::vector<std::size_t>& multiples,
                                std::size_t trials, std::uint64_t seed, double tolerance) {
  CheckReport rep;
  rep.tolerance = tolerance;
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream rng(derive_seed(seed, t));
    const SizedObject x = sampler(rng);
    const SizedObject fx = model.f(x);
    const double scale = 1.0 + output_norm(fx, model);
    for (std::size_t m : multiples) {
      const std::size_t target = m * x.n();
      const SizedObject lhs = model.f(embed(x, seq, target));
      const SizedObject rhs = model.out_seq ? embed(fx, *model.out_seq, target) : fx;
      const double dev = difference_norm(lhs, rhs, model) / scale;
      rep.deviations.push_back({target, t, dev});
      rep.max_deviation = std::max(rep.max_deviation, std::isnan(dev) ? INFINITY : dev);
    }
  }
  rep.pass = rep.max_deviation <= tolerance;
  return rep;
}

CheckReport check_compatibility(const CompatModel& model, const SizedObject& x, SequenceKind seq,
                                const std::vector<std::size_t>& multiples, double tolerance) {
  return check_compatibility(
      model, [&](RngStream&) { return x; }, seq, multiples, 1, 0, tolerance);
}

CheckReport check_equivariance(const CompatModel& model, const SizedObject& x, std::size_t trials,
                               std::uint64_t seed, double tolerance) {
  CheckReport rep;
  rep.tolerance = tolerance;
  const SizedObject fx = model.f(x);
  const double scale = 1.0 + output_norm(fx, model);
  std::optional<std::size_t> k;
  if (x.kind == ObjectKind::kCloud) k = x.x.cols();
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream rng(derive_seed(seed, t));
    const GroupElement g = GroupElement::random(x.n(), k, rng);
    const SizedObject lhs = model.f(act(g, x));
    // Outputs carry only the permutation action.
    const SizedObject rhs = model.out_seq ? apply_perm(g.perm, fx) : fx;
    const double dev = difference_norm(lhs, rhs, model) / scale;
    rep.deviations.push_back({x.n(), t, dev});
    rep.max_deviation = std::max(rep.max_deviation, std::isnan(dev) ? INFINITY : dev);
  }
  rep.pass = rep.max_deviation <= tolerance;
  return rep;
}

}  // namespace dimlift

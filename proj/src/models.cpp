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

#include "dimlift/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dimlift/error.hpp"
#include "dimlift/parallel.hpp"

namespace dimlift {

using ad::Tape;
using ad::Var;

namespace {

constexpr std::size_t kIgnTerms = 15;

std::string layer_name(const std::string& prefix, std::size_t l, const char* part) {
  return prefix + std::to_string(l) + "." + part;
}

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

std::vector<std::size_t> chain_of(std::size_t first, const std::vector<std::size_t>& mid,
                                  std::size_t last) {
  std::vector<std::size_t> c{first};
  c.insert(c.end(), mid.begin(), mid.end());
  c.push_back(last);
  return c;
}

std::vector<std::size_t> descending_order(const Matrix& col) {
  std::vector<std::size_t> idx(col.rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return col[a] > col[b]; });
  return idx;
}

}  // namespace

void ModelSpec::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::kConfigError, "model spec: " + m); };
  if (out_dim == 0) bad("out_dim must be positive");
  for (std::size_t w : widths)
    if (w == 0) bad("widths must be positive");
  for (std::size_t w : head)
    if (w == 0) bad("head widths must be positive");
  const bool set_like = family == Family::kDeepSet || family == Family::kNormDeepSet ||
                        family == Family::kPointNet || family == Family::kSvdDs ||
                        family == Family::kDsci;
  if (set_like && widths.empty()) bad("set models need at least one rho width");
  if (family != Family::kDsci && in_dim == 0) bad("in_dim must be positive");
  if (family == Family::kSvdDs) {
    if (agg != Aggregation::kNormalizedSum && agg != Aggregation::kSum)
      bad("svdds aggregation must be normalized-sum or sum");
  } else if (family != Family::kMpnn && agg != Aggregation::kNormalizedSum) {
    bad("aggregation applies to mpnn and svdds only");
  }
}

std::string to_string(Family f) {
  switch (f) {
    case Family::kDeepSet: return "deepset";
    case Family::kNormDeepSet: return "norm-deepset";
    case Family::kPointNet: return "pointnet";
    case Family::kMpnn: return "mpnn";
    case Family::kIgn2Norm: return "ign2-norm";
    case Family::kGgnn: return "ggnn";
    case Family::kCggnn: return "cggnn";
    case Family::kDsci: return "dsci";
    case Family::kSvdDs: return "svdds";
  }
  return "?";
}

Family parse_family(const std::string& s) {
  for (Family f : {Family::kDeepSet, Family::kNormDeepSet, Family::kPointNet, Family::kMpnn,
                   Family::kIgn2Norm, Family::kGgnn, Family::kCggnn, Family::kDsci,
                   Family::kSvdDs})
    if (to_string(f) == s) return f;
  fail(ErrorCode::kConfigError, "unknown model family '" + s + "'");
}

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::kSum: return "sum";
    case Aggregation::kMean: return "mean";
    case Aggregation::kMax: return "max";
    case Aggregation::kNormalizedSum: return "normalized-sum";
  }
  return "?";
}

Aggregation parse_aggregation(const std::string& s) {
  for (Aggregation a : {Aggregation::kSum, Aggregation::kMean, Aggregation::kMax,
                        Aggregation::kNormalizedSum})
    if (to_string(a) == s) return a;
  fail(ErrorCode::kConfigError, "unknown aggregation '" + s + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "?";
}

Activation parse_activation(const std::string& s) {
  for (Activation a : {Activation::kRelu, Activation::kTanh, Activation::kIdentity})
    if (to_string(a) == s) return a;
  fail(ErrorCode::kConfigError, "unknown activation '" + s + "'");
}

ObjectKind input_kind(Family f) {
  switch (f) {
    case Family::kMpnn:
    case Family::kIgn2Norm:
    case Family::kGgnn:
    case Family::kCggnn: return ObjectKind::kGraph;
    case Family::kDsci:
    case Family::kSvdDs: return ObjectKind::kCloud;
    default: return ObjectKind::kSet;
  }
}

bool is_invariant(Family f) {
  return input_kind(f) != ObjectKind::kGraph;
}

void add_mlp(ParamStore& ps, const std::string& prefix, const std::vector<std::size_t>& chain,
             bool bias, RngStream& rng) {
  for (std::size_t l = 0; l + 1 < chain.size(); ++l) {
    const double b = fan_in_bound(chain[l]);
    ps.add_uniform(prefix + ".W" + std::to_string(l), chain[l], chain[l + 1], b, rng);
    if (bias) ps.add_uniform(prefix + ".b" + std::to_string(l), 1, chain[l + 1], b, rng);
  }
}

Var mlp(Tape& t, Var x, const std::string& prefix, std::size_t layers, Activation act,
        bool act_last, bool bias) {
  for (std::size_t l = 0; l < layers; ++l) {
    x = ad::matmul(t, x, t.param(prefix + ".W" + std::to_string(l)));
    if (bias) x = ad::add_row(t, x, t.param(prefix + ".b" + std::to_string(l)));
    if (l + 1 < layers || act_last) x = ad::activate(t, x, act);
  }
  return x;
}

Matrix mlp_forward(const ParamStore& ps, const std::string& prefix, std::size_t layers,
                   const Matrix& x, Activation act, bool act_last, bool bias) {
  Tape t(&ps);
  return t.value(mlp(t, t.constant(x), prefix, layers, act, act_last, bias));
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

ParamStore Model::init(std::uint64_t seed) const {
  ParamStore ps;
  RngStream rng(seed);
  const ModelSpec& s = spec_;
  switch (s.family) {
    case Family::kDeepSet:
    case Family::kNormDeepSet:
    case Family::kPointNet:
    case Family::kSvdDs: {
      add_mlp(ps, "rho", chain_of(s.in_dim, {s.widths.begin(), s.widths.end() - 1}, s.widths.back()),
              s.rho_bias, rng);
      add_mlp(ps, "sigma", chain_of(s.widths.back(), s.head, s.out_dim), true, rng);
      break;
    }
    case Family::kMpnn: {
      const auto c = chain_of(s.in_dim, s.widths, s.out_dim);
      for (std::size_t l = 0; l + 1 < c.size(); ++l) {
        add_mlp(ps, "mp" + std::to_string(l) + ".xi", {c[l], c[l + 1]}, true, rng);
        add_mlp(ps, "mp" + std::to_string(l) + ".phi", {c[l] + c[l + 1], c[l + 1]}, true, rng);
      }
      break;
    }
    case Family::kIgn2Norm: {
      const auto c = chain_of(1 + s.in_dim, s.widths, s.out_dim);
      for (std::size_t l = 0; l + 1 < c.size(); ++l) {
        const double b = fan_in_bound(kIgnTerms * c[l]);
        ps.add_uniform(layer_name("ign", l, "alpha"), kIgnTerms * c[l], c[l + 1], b, rng);
        ps.add_uniform(layer_name("ign", l, "beta"), 2, c[l + 1], b, rng);
      }
      break;
    }
    case Family::kGgnn:
    case Family::kCggnn: {
      const bool full = s.family == Family::kGgnn;
      const auto c = chain_of(s.in_dim, s.widths, s.out_dim);
      const std::size_t slots = s.message_degree + 1;
      for (std::size_t l = 0; l + 1 < c.size(); ++l) {
        const std::size_t d = c[l], w = slots * c[l + 1];
        const double ba = fan_in_bound((full ? 6 : 3) + 2 * d);
        const double bx = fan_in_bound(2 * d + (full ? 5 : 2));
        auto P = [&](const char* name, std::size_t r, std::size_t cc, double b) {
          ps.add_uniform(layer_name("g", l, name), r, cc, b, rng);
        };
        P("a1", 1, 1, ba);
        P("a2", 1, 1, ba);
        if (full) P("a3", 1, 1, ba);
        P("a4", 1, 1, ba);
        if (full) P("a5", 1, 1, ba);
        P("a6", d, 1, ba);
        P("a7", d, 1, ba);
        if (full) P("b1", 1, 1, ba);
        P("Th1", d, w, bx);
        P("Th2", d, w, bx);
        P("t1", 1, w, bx);
        if (full) P("t2", 1, w, bx);
        if (full) P("t3", 1, w, bx);
        P("t4", 1, w, bx);
        if (full) P("b2", 1, w, bx);
      }
      break;
    }
    case Family::kDsci: {
      const std::size_t w = s.widths.back();
      for (const char* block : {"diag", "off"}) {
        add_mlp(ps, std::string(block) + ".rho", chain_of(1, {s.widths.begin(), s.widths.end() - 1}, w),
                true, rng);
        add_mlp(ps, std::string(block) + ".sigma", {w, w}, true, rng);
      }
      add_mlp(ps, "fstar", {1, w}, true, rng);
      add_mlp(ps, "comb", chain_of(3 * w, s.head, s.out_dim), true, rng);
      break;
    }
  }
  return ps;
}

ModelOutput Model::forward(Tape& t, const SizedObject& x, bool* degenerate) const {
  const ObjectKind kind = input_kind(spec_.family);
  require(x.kind == kind, ErrorCode::kInvalidInput,
          to_string(spec_.family) + ": wrong input object kind");
  if (kind == ObjectKind::kGraph) {
    require(is_symmetric(x.a, 1e-12 * std::max(1.0, max_abs(x.a))), ErrorCode::kInvalidInput,
            to_string(spec_.family) + ": adjacency must be symmetric");
  }
  const Var a = kind == ObjectKind::kGraph ? t.constant(x.a) : Var{};
  return forward_vars(t, kind, a, t.constant(x.x), degenerate);
}

ModelOutput Model::forward_vars(Tape& t, ObjectKind kind, Var a, Var x, bool* degenerate) const {
  require(kind == input_kind(spec_.family), ErrorCode::kInvalidInput,
          to_string(spec_.family) + ": wrong input object kind");
  const Matrix& xv = t.value(x);
  if (spec_.family != Family::kDsci)
    require(xv.cols() == spec_.in_dim, ErrorCode::kInvalidInput,
            to_string(spec_.family) + ": expected " + std::to_string(spec_.in_dim) +
                " feature columns, got " + std::to_string(xv.cols()));
  require(xv.rows() >= 1, ErrorCode::kInvalidInput, "empty input");
  if (degenerate) *degenerate = false;
  switch (spec_.family) {
    case Family::kDeepSet:
    case Family::kNormDeepSet:
    case Family::kPointNet: return {set_forward(t, x), {}};
    case Family::kSvdDs: {
      require(xv.cols() <= xv.rows(), ErrorCode::kInvalidInput, "svdds: need k <= n");
      return {set_forward(t, ad::svd_project(t, x, degenerate)), {}};
    }
    case Family::kMpnn: return {mpnn_forward(t, a, x), {}};
    case Family::kIgn2Norm: return ign_forward(t, a, x);
    case Family::kGgnn:
    case Family::kCggnn: return ggnn_forward(t, a, x);
    case Family::kDsci: return {dsci_forward(t, x), {}};
  }
  fail(ErrorCode::kInvalidInput, "unreachable");
}

Var Model::set_forward(Tape& t, Var x) const {
  const ModelSpec& s = spec_;
  Var h = mlp(t, x, "rho", s.widths.size(), s.act, false, s.rho_bias);
  Var agg;
  switch (s.family) {
    case Family::kDeepSet: agg = ad::sum_rows(t, h); break;
    case Family::kSvdDs:
      agg = s.agg == Aggregation::kSum ? ad::sum_rows(t, h) : ad::mean_rows(t, h);
      break;
    case Family::kPointNet: agg = ad::max_rows(t, h); break;
    default: agg = ad::mean_rows(t, h); break;
  }
  return mlp(t, agg, "sigma", s.head.size() + 1, s.act, false, true);
}

Var Model::mpnn_forward(Tape& t, Var a, Var x) const {
  const ModelSpec& s = spec_;
  const Matrix av = t.value(a);  // copy: the tape grows below
  const std::size_t n = av.rows();
  std::vector<double> inv_deg;
  if (s.agg == Aggregation::kMean) {
    inv_deg.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0;
      for (double v : av.row_span(i)) d += v;
      inv_deg[i] = d != 0.0 ? 1.0 / d : 0.0;
    }
  }
  const std::size_t layers = s.depth();
  Var h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = "mp" + std::to_string(l);
    Var m = mlp(t, h, p + ".xi", 1, s.act, true, true);
    Var agg;
    switch (s.agg) {
      case Aggregation::kNormalizedSum:
        agg = ad::scale(t, ad::matmul(t, a, m), 1.0 / static_cast<double>(n));
        break;
      case Aggregation::kSum: agg = ad::matmul(t, a, m); break;
      case Aggregation::kMean: agg = ad::row_scale(t, ad::matmul(t, a, m), inv_deg); break;
      case Aggregation::kMax: agg = ad::weighted_max(t, av, m); break;
    }
    h = mlp(t, ad::concat_cols(t, {h, agg}), p + ".phi", 1, s.act, l + 1 < layers, true);
  }
  return h;
}

ModelOutput Model::ign_forward(Tape& t, Var a, Var x) const {
  const ModelSpec& s = spec_;
  const Matrix& av = t.value(a);
  const Matrix& xv = t.value(x);
  const std::size_t n = av.rows();
  // Input channels: A, then diag(X_j) for each signal column. Inputs enter as data.
  Matrix in(1 + xv.cols(), n * n);
  std::copy(av.data().begin(), av.data().end(), in.data().begin());
  for (std::size_t j = 0; j < xv.cols(); ++j)
    for (std::size_t i = 0; i < n; ++i) in(1 + j, i * n + i) = xv(i, j);
  Var h = t.constant(std::move(in));
  const std::size_t layers = s.depth();
  for (std::size_t l = 0; l < layers; ++l) {
    h = ad::ign_layer(t, h, t.param(layer_name("ign", l, "alpha")),
                      t.param(layer_name("ign", l, "beta")), n);
    if (l + 1 < layers) h = ad::activate(t, h, s.act);
  }
  const Var first = ad::reshape(t, ad::gather_rows(t, h, {0}), n, n);
  return {ad::ign_readout(t, h, n), first};
}

namespace {

struct GgnnLayerVars {
  Var a;
  Var xs;  // n x (S+1) d'
};

GgnnLayerVars ggnn_linear_vars(Tape& t, bool full, std::size_t l, Var a, Var x, bool bias) {
  const double dn = static_cast<double>(t.value(a).rows());
  auto P = [&](const char* name) { return t.param(layer_name("g", l, name)); };
  const Var rn = ad::scale(t, ad::row_sums(t, a), 1.0 / dn);
  const Var tot = ad::scale(t, ad::sum_all(t, a), 1.0 / (dn * dn));
  const Var xm = ad::mean_rows(t, x);
  Var u = ad::add(t, ad::scalar_mul(t, P("a4"), rn), ad::matmul(t, x, P("a6")));
  Var c = ad::add(t, ad::scalar_mul(t, P("a2"), tot), ad::matmul(t, xm, P("a7")));
  Var xs = ad::add(t, ad::matmul(t, x, P("Th1")), ad::matmul(t, rn, P("t1")));
  Var rowb = ad::add(t, ad::matmul(t, xm, P("Th2")), ad::matmul(t, tot, P("t4")));
  if (full) {
    const Var dg = ad::diag_vec(t, a);
    const Var tr = ad::scale(t, ad::trace(t, a), 1.0 / dn);
    u = ad::add(t, u, ad::scalar_mul(t, P("a5"), dg));
    c = ad::add(t, c, ad::scalar_mul(t, P("a3"), tr));
    xs = ad::add(t, xs, ad::matmul(t, dg, P("t2")));
    rowb = ad::add(t, rowb, ad::matmul(t, tr, P("t3")));
    if (bias) {
      c = ad::add(t, c, P("b1"));
      rowb = ad::add(t, rowb, P("b2"));
    }
  }
  return {ad::affine_adj(t, a, P("a1"), u, c), ad::add_row(t, xs, rowb)};
}

}  // namespace

ModelOutput Model::ggnn_forward(Tape& t, Var a, Var x) const {
  const ModelSpec& s = spec_;
  const bool full = s.family == Family::kGgnn;
  const double dn = static_cast<double>(t.value(a).rows());
  const auto c = chain_of(s.in_dim, s.widths, s.out_dim);
  const std::size_t S = s.message_degree;
  for (std::size_t l = 0; l + 1 < c.size(); ++l) {
    const std::size_t w = c[l + 1];
    const GgnnLayerVars lin = ggnn_linear_vars(t, full, l, a, x, true);
    // sum_s n^-s A'^s X'_s by Horner's rule.
    Var h = ad::slice_cols(t, lin.xs, S * w, (S + 1) * w);
    for (std::size_t s2 = S; s2-- > 0;) {
      h = ad::add(t, ad::slice_cols(t, lin.xs, s2 * w, (s2 + 1) * w),
                  ad::scale(t, ad::matmul(t, lin.a, h), 1.0 / dn));
    }
    if (l + 2 < c.size()) h = ad::activate(t, h, s.act);
    a = lin.a;
    x = h;
  }
  return {x, a};
}

Var Model::deepset_block(Tape& t, Var rows, const std::string& prefix) const {
  Var h = mlp(t, rows, prefix + ".rho", spec_.widths.size(), spec_.act, false, true);
  return mlp(t, ad::mean_rows(t, h), prefix + ".sigma", 1, spec_.act, true, true);
}

Var Model::dsci_forward(Tape& t, Var v) const {
  const std::size_t n = t.value(v).rows();
  const bool normalized = spec_.variant == DsciVariant::kNormalized;
  require(!normalized || n >= 2, ErrorCode::kInvalidInput, "dsci: normalized variant needs n >= 2");
  const Var g = ad::matmul(t, v, v, false, true);
  const Var dg = ad::diag_vec(t, g);
  const Var d_sorted = ad::gather_rows(t, dg, descending_order(t.value(dg)));
  const Var off = normalized ? ad::upper_entries(t, g) : ad::reshape(t, g, n * n, 1);
  const Var off_sorted = ad::gather_rows(t, off, descending_order(t.value(off)));
  const Var f = ad::diag_weighted_mean(t, g, !normalized);
  const Var parts = ad::concat_cols(t, {deepset_block(t, d_sorted, "diag"),
                                        deepset_block(t, off_sorted, "off"),
                                        mlp(t, f, "fstar", 1, spec_.act, true, true)});
  return mlp(t, parts, "comb", spec_.head.size() + 1, spec_.act, false, true);
}

Matrix Model::predict(const ParamStore& ps, const SizedObject& x) const {
  Tape t(&ps);
  return t.value(forward(t, x).x);
}

SizedObject Model::predict_object(const ParamStore& ps, const SizedObject& x) const {
  Tape t(&ps);
  const ModelOutput out = forward(t, x);
  SizedObject o;
  if (out.a.valid()) {
    o.kind = ObjectKind::kGraph;
    o.a = t.value(out.a);
  } else {
    o.kind = ObjectKind::kSet;
  }
  o.x = t.value(out.x);
  return o;
}

CompatModel compat_model(const Model& model, const ParamStore& ps) {
  CompatModel cm;
  cm.name = to_string(model.spec().family);
  cm.f = [model, ps](const SizedObject& x) { return model.predict_object(ps, x); };
  switch (model.spec().family) {
    case Family::kMpnn:
      cm.out_seq = SequenceKind::kDupSet;
      cm.out_norm = NormKind::normalized_lp(2.0);
      break;
    case Family::kIgn2Norm:
    case Family::kGgnn:
    case Family::kCggnn:
      cm.out_seq = SequenceKind::kDupGraph;
      cm.out_norm = NormKind::graph_p(2.0);
      break;
    default: break;
  }
  return cm;
}

GradResult loss_and_grad(const Model& model, const ParamStore& ps,
                         const std::vector<SizedObject>& inputs,
                         const std::vector<Matrix>& targets,
                         const std::vector<std::size_t>& batch) {
  require(inputs.size() == targets.size(), ErrorCode::kInvalidInput,
          "loss_and_grad: inputs and targets differ in length");
  require(!batch.empty(), ErrorCode::kInvalidInput, "loss_and_grad: empty batch");
  std::vector<std::vector<double>> grads(batch.size());
  std::vector<double> losses(batch.size(), 0.0);
  std::vector<char> skipped(batch.size(), 0);
  parallel_for(batch.size(), [&](std::size_t b) {
    const std::size_t i = batch[b];
    require(i < inputs.size(), ErrorCode::kInvalidInput, "loss_and_grad: index out of range");
    Tape t(&ps);
    bool degenerate = false;
    const Var out = model.forward(t, inputs[i], &degenerate).x;
    if (degenerate) {
      skipped[b] = 1;
      return;
    }
    const Var loss = ad::mse(t, out, targets[i]);
    t.backward(loss);
    losses[b] = t.value(loss)[0];
    grads[b] = t.param_grads();
  });
  GradResult r;
  r.grad.assign(ps.size(), 0.0);
  std::size_t used = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (skipped[b]) {
      ++r.skipped;
      continue;
    }
    ++used;
    r.loss += losses[b];
    for (std::size_t k = 0; k < r.grad.size(); ++k) r.grad[k] += grads[b][k];
  }
  if (used > 0) {
    const double inv = 1.0 / static_cast<double>(used);
    r.loss *= inv;
    for (double& g : r.grad) g *= inv;
  }
  return r;
}

GgnnLinearOut ggnn_linear(const Model& model, const ParamStore& ps, std::size_t layer,
                          const Matrix& a, const Matrix& x) {
  const Family f = model.spec().family;
  require(f == Family::kGgnn || f == Family::kCggnn, ErrorCode::kInvalidInput,
          "ggnn_linear: not a GGNN model");
  Tape t(&ps);
  const auto out =
      ggnn_linear_vars(t, f == Family::kGgnn, layer, t.constant(a), t.constant(x), false);
  return {t.value(out.a), t.value(out.xs)};
}

double ggnn_linear_bound(const Model& model, const ParamStore& ps, std::size_t layer) {
  const ModelSpec& s = model.spec();
  const bool full = s.family == Family::kGgnn;
  auto get = [&](const char* name) {
    const std::string key = layer_name("g", layer, name);
    return ps.contains(key) ? ps.get(key) : Matrix();
  };
  auto sabs = [](const Matrix& m) {
    double acc = 0.0;
    for (double v : m.data()) acc += std::abs(v);
    return acc;
  };
  // X_j 1^T + 1 X_j^T can reach 2 |X|_inf, hence the factor 2 on alpha_6.
  double a_part = sabs(get("a1")) + sabs(get("a2")) + 2.0 * sabs(get("a4")) +
                  2.0 * sabs(get("a6")) + sabs(get("a7"));
  if (full) a_part += sabs(get("a3")) + 2.0 * sabs(get("a5"));
  const Matrix th1 = get("Th1"), th2 = get("Th2");
  const std::size_t w = th1.cols();
  double x_part = 0.0;
  for (std::size_t col = 0; col < w; ++col) {
    double c1 = 0.0, c2 = 0.0;
    for (std::size_t r = 0; r < th1.rows(); ++r) {
      c1 += std::abs(th1(r, col));
      c2 += std::abs(th2(r, col));
    }
    double v = c1 + c2;
    for (const char* name : {"t1", "t2", "t3", "t4"}) {
      if (!full && (name[1] == '2' || name[1] == '3')) continue;
      v += std::abs(get(name)[col]);
    }
    x_part = std::max(x_part, v);
  }
  return std::max(a_part, x_part);
}

}  // namespace dimlift

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

#include "dimlift/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "json.hpp"

#include "dimlift/error.hpp"
#include "dimlift/io.hpp"
#include "dimlift/metrics.hpp"

namespace dimlift {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::uint64_t kTagModelInit = 0x90DE1;

[[noreturn]] void bad_config(const std::string& path, const std::string& what) {
  fail(ErrorCode::kConfigError, "config " + path + ": " + what);
}

Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kConfigError,
         "config $: malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

/// Typed view of one JSON object that remembers which keys were read, so
/// leftovers can be reported as unknown.
class Node {
 public:
  Node(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) bad_config(path_, "expected an object");
  }

  const std::string& path() const noexcept { return path_; }
  bool has(const char* k) const { return j_.contains(k); }
  std::string at(const char* k) const { return path_ + "." + k; }

  const Json* find(const char* k) {
    seen_.insert(k);
    auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }
  const Json& need(const char* k) {
    const Json* v = find(k);
    if (!v) bad_config(at(k), "required key is missing");
    return *v;
  }

  double num(const char* k, double def) {
    const Json* v = find(k);
    return v ? as_num(*v, at(k)) : def;
  }
  std::uint64_t u64(const char* k, std::uint64_t def) {
    const Json* v = find(k);
    return v ? as_u64(*v, at(k)) : def;
  }
  bool flag(const char* k, bool def) {
    const Json* v = find(k);
    if (!v) return def;
    if (!v->is_boolean()) bad_config(at(k), "expected true or false");
    return v->get<bool>();
  }
  std::string str(const char* k, const std::string& def) {
    const Json* v = find(k);
    return v ? as_str(*v, at(k)) : def;
  }
  std::string str(const char* k) { return as_str(need(k), at(k)); }
  std::vector<std::size_t> sizes(const char* k, std::vector<std::size_t> def) {
    const Json* v = find(k);
    if (!v) return def;
    if (!v->is_array()) bad_config(at(k), "expected an array of integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v->size(); ++i)
      out.push_back(as_u64((*v)[i], at(k) + "[" + std::to_string(i) + "]"));
    return out;
  }
  std::vector<double> reals(const char* k, std::vector<double> def) {
    const Json* v = find(k);
    return v ? as_reals(*v, at(k)) : def;
  }
  Matrix matrix(const char* k) { return as_matrix(need(k), at(k)); }
  Node obj(const char* k) { return Node(need(k), at(k)); }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) bad_config(at(it.key().c_str()), "unknown key");
  }

  static double as_num(const Json& v, const std::string& path) {
    if (!v.is_number()) bad_config(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) bad_config(path, "expected a finite number");
    return d;
  }
  static std::uint64_t as_u64(const Json& v, const std::string& path) {
    if (!v.is_number_unsigned()) bad_config(path, "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }
  static std::string as_str(const Json& v, const std::string& path) {
    if (!v.is_string()) bad_config(path, "expected a string");
    return v.get<std::string>();
  }
  static std::vector<double> as_reals(const Json& v, const std::string& path) {
    if (!v.is_array()) bad_config(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(as_num(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
  }
  static Matrix as_matrix(const Json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) bad_config(path, "expected a nonempty array of rows");
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < v.size(); ++i) {
      rows.push_back(as_reals(v[i], path + "[" + std::to_string(i) + "]"));
      if (rows.back().size() != rows.front().size()) bad_config(path, "rows differ in length");
    }
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/// Runs a string parser and reports failures at `path`.
template <typename F>
auto enum_at(const std::string& path, F&& parse) {
  try {
    return parse();
  } catch (const Error& e) {
    bad_config(path, e.what());
  }
}

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string variant_name(DsciVariant v) {
  return v == DsciVariant::kNormalized ? "normalized" : "compatible";
}

ModelSpec parse_model(Node& n) {
  const Family f = enum_at(n.at("family"), [&] { return parse_family(n.str("family")); });
  ModelSpec s = default_spec(f);
  s.in_dim = n.u64("in_dim", s.in_dim);
  s.out_dim = n.u64("out_dim", s.out_dim);
  s.widths = n.sizes("widths", s.widths);
  s.head = n.sizes("head", s.head);
  s.message_degree = n.u64("message_degree", s.message_degree);
  if (n.has("activation"))
    s.act = enum_at(n.at("activation"), [&] { return parse_activation(n.str("activation")); });
  if (n.has("aggregation"))
    s.agg = enum_at(n.at("aggregation"), [&] { return parse_aggregation(n.str("aggregation")); });
  if (n.has("variant")) {
    const std::string v = n.str("variant");
    if (v == "normalized") s.variant = DsciVariant::kNormalized;
    else if (v == "compatible") s.variant = DsciVariant::kCompatible;
    else bad_config(n.at("variant"), "expected normalized or compatible");
  }
  s.rho_bias = n.flag("rho_bias", s.rho_bias);
  try {
    s.validate();
  } catch (const Error& e) {
    bad_config(n.path(), e.what());
  }
  return s;
}

Json model_json(const ModelSpec& s) {
  Json j;
  j["family"] = to_string(s.family);
  j["in_dim"] = s.in_dim;
  j["out_dim"] = s.out_dim;
  j["widths"] = s.widths;
  j["head"] = s.head;
  j["message_degree"] = s.message_degree;
  j["activation"] = to_string(s.act);
  j["aggregation"] = to_string(s.agg);
  j["variant"] = variant_name(s.variant);
  j["rho_bias"] = s.rho_bias;
  return j;
}

/// Model parameters: explicit init_seed, else derived from the run seed.
std::uint64_t model_seed(Node& n, std::uint64_t seed) {
  return n.u64("init_seed", derive_seed(seed, kTagModelInit));
}

SignalFn parse_signal(Node n) {
  SignalFn f;
  const std::string k = n.str("kind");
  if (k == "constant") {
    f.kind = SignalFn::Kind::kConstant;
    f.a = n.num("value", 1.0);
    f.b = 0.0;
  } else if (k == "linear") {
    f.kind = SignalFn::Kind::kLinear;
    f.a = n.num("intercept", 0.0);
    f.b = n.num("slope", 1.0);
  } else if (k == "sine") {
    f.kind = SignalFn::Kind::kSine;
    f.a = n.num("amplitude", 1.0);
    f.b = n.num("frequency", 1.0);
  } else {
    bad_config(n.at("kind"), "expected constant, linear or sine");
  }
  n.done();
  return f;
}

Graphon parse_graphon(Node n) {
  Graphon w;
  const std::string k = n.str("kind");
  if (k == "constant") {
    w.kind = Graphon::Kind::kConstant;
    w.c = n.num("value", 0.5);
  } else if (k == "sbm") {
    w.kind = Graphon::Kind::kSbm;
    w.p = n.matrix("p");
    w.gamma = n.reals("gamma", {});
    if (w.gamma.empty()) w.gamma.assign(w.p.rows(), 1.0 / static_cast<double>(w.p.rows()));
  } else if (k == "table") {
    w.kind = Graphon::Kind::kTable;
    w.p = n.matrix("values");
  } else {
    bad_config(n.at("kind"), "expected constant, sbm or table");
  }
  n.done();
  try {
    w.validate();
  } catch (const Error& e) {
    bad_config(n.path(), e.what());
  }
  return w;
}

Limit parse_limit(Node n) {
  Limit l;
  const std::string k = n.str("kind");
  if (k == "gaussian") {
    l.kind = Limit::Kind::kScalarGaussian;
    l.a = n.num("mean", 0.0);
    l.b = n.num("sd", 1.0);
  } else if (k == "uniform") {
    l.kind = Limit::Kind::kScalarUniform;
    l.a = n.num("lo", 0.0);
    l.b = n.num("hi", 1.0);
  } else if (k == "gaussian-vec") {
    l.kind = Limit::Kind::kGaussianVec;
    l.chol = n.matrix("factor");
  } else if (k == "function") {
    l.kind = Limit::Kind::kFunction;
    l.f = parse_signal(n.obj("f"));
  } else if (k == "graphon") {
    l.kind = Limit::Kind::kGraphon;
    l.w = parse_graphon(n.obj("graphon"));
    l.f = n.has("signal") ? parse_signal(n.obj("signal"))
                          : SignalFn{SignalFn::Kind::kConstant, 1.0, 0.0};
  } else if (k == "cloud") {
    l.kind = Limit::Kind::kCloud;
    l.means = n.matrix("means");
    l.weights = n.reals("weights", std::vector<double>(l.means.rows(), 1.0));
    l.sd = n.num("sd", 1.0);
  } else {
    bad_config(n.at("kind"), "expected gaussian, uniform, gaussian-vec, function, graphon or cloud");
  }
  n.done();
  return l;
}

SamplerSpec parse_sampler(Node n, std::uint64_t seed) {
  SamplerSpec s;
  s.limit = parse_limit(n.obj("limit"));
  s.scheme = enum_at(n.at("scheme"), [&] { return parse_scheme(n.str("scheme", "iid")); });
  s.seed = n.u64("seed", seed);
  n.done();
  try {
    s.validate();
  } catch (const Error& e) {
    bad_config(n.path(), e.what());
  }
  return s;
}

SizedObject random_input(const ModelSpec& s, std::size_t n, RngStream& rng) {
  switch (input_kind(s.family)) {
    case ObjectKind::kSet: {
      Matrix x(n, s.in_dim);
      for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
      return SizedObject::set(std::move(x));
    }
    case ObjectKind::kGraph: {
      Matrix a(n, n), x(n, s.in_dim);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) a(i, j) = a(j, i) = rng.uniform();
      for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
      return SizedObject::graph(std::move(a), std::move(x));
    }
    case ObjectKind::kCloud: {
      Matrix x(n, s.in_dim);
      for (double& v : x.data()) v = rng.gaussian();
      return SizedObject::cloud(std::move(x));
    }
  }
  return {};
}

Json object_json(const SizedObject& o) {
  Json j;
  j["kind"] = o.kind == ObjectKind::kSet ? "set" : o.kind == ObjectKind::kGraph ? "graph" : "cloud";
  if (o.kind == ObjectKind::kGraph) j["a"] = matrix_json(o.a);
  j["x"] = matrix_json(o.x);
  return j;
}

std::string dump(const Json& j) { return j.dump(1) + "\n"; }

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError:
    case ErrorCode::kParseError:
    case ErrorCode::kIoError: return 2;
    case ErrorCode::kSizeCapExceeded: return 3;
    default: return 1;
  }
}

void write_outputs(const RunOutput& out, const std::string& dir) {
  namespace fs = std::filesystem;
  for (const auto& [name, bytes] : out.files) {
    const fs::path p = fs::path(dir) / name;
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    require(!ec, ErrorCode::kIoError, "cannot create directory " + p.parent_path().string());
    write_file_atomic(p.string(), bytes);
  }
}

SequenceKind parse_sequence(const std::string& s) {
  for (SequenceKind k : {SequenceKind::kZeroPadSet, SequenceKind::kDupSet, SequenceKind::kDupGraph,
                         SequenceKind::kDupPointCloud})
    if (to_string(k) == s) return k;
  fail(ErrorCode::kConfigError, "unknown sequence '" + s + "'");
}

ModelSpec default_spec(Family f) {
  ModelSpec s;
  s.family = f;
  switch (f) {
    case Family::kDeepSet:
    case Family::kNormDeepSet:
    case Family::kPointNet:
      s.in_dim = 2;
      s.widths = {16, 16};
      s.head = {16};
      break;
    case Family::kMpnn:
      s.in_dim = 2;
      s.out_dim = 2;
      s.widths = {8, 8};
      s.head = {};
      break;
    case Family::kIgn2Norm:
    case Family::kGgnn:
    case Family::kCggnn:
      s.in_dim = 2;
      s.out_dim = 2;
      s.widths = {4};
      s.head = {};
      break;
    case Family::kDsci:
      s.in_dim = 3;
      s.widths = {8};
      s.head = {8};
      break;
    case Family::kSvdDs:
      s.in_dim = 3;
      s.widths = {16, 16};
      s.head = {16};
      break;
  }
  return s;
}

const std::vector<CompatPair>& compatible_pairs() {
  static const std::vector<CompatPair> pairs = {
      {Family::kNormDeepSet, SequenceKind::kDupSet, true},
      {Family::kPointNet, SequenceKind::kDupSet, true},
      {Family::kDeepSet, SequenceKind::kZeroPadSet, false},
      {Family::kMpnn, SequenceKind::kDupGraph, true},
      {Family::kGgnn, SequenceKind::kDupGraph, true},
      {Family::kCggnn, SequenceKind::kDupGraph, true},
      {Family::kDsci, SequenceKind::kDupPointCloud, true},
      {Family::kSvdDs, SequenceKind::kDupPointCloud, true},
  };
  return pairs;
}

std::vector<Witness> incompatibility_witnesses() {
  std::vector<Witness> out;
  auto scalar_set = [](Family f) {
    ModelSpec s;
    s.family = f;
    s.in_dim = 1;
    return s;
  };
  {
    // The sum grows with the duplication factor.
    ModelSpec s = scalar_set(Family::kDeepSet);
    const Model m(s);
    out.push_back({"deepset/dup-set", s, m.init(1), SequenceKind::kDupSet,
                   SizedObject::set(Matrix{{1.0}, {2.0}, {-0.5}, {3.0}}), 4});
  }
  {
    // Zero padding shrinks the mean.
    ModelSpec s = scalar_set(Family::kNormDeepSet);
    const Model m(s);
    out.push_back({"norm-deepset/zero-set", s, m.init(1), SequenceKind::kZeroPadSet,
                   SizedObject::set(Matrix{{30.0}, {40.0}}), 4});
  }
  {
    // Padding zeros beat every all-negative row in the max.
    ModelSpec s = scalar_set(Family::kPointNet);
    const Model m(s);
    out.push_back({"pointnet/zero-set", s, m.init(1), SequenceKind::kZeroPadSet,
                   SizedObject::set(Matrix{{-30.0}, {-40.0}}), 4});
  }
  {
    // The diagonal basis element keeps a diagonal matrix under duplication.
    ModelSpec s;
    s.family = Family::kIgn2Norm;
    s.in_dim = 1;
    s.widths = {};
    const Model m(s);
    ParamStore ps = m.init(0);
    ps.fill(0.0);
    Matrix alpha(30, 1);
    alpha(2 * 2, 0) = 1.0;
    ps.set("ign0.alpha", alpha);
    out.push_back({"ign2-norm/dup-graph", s, ps, SequenceKind::kDupGraph,
                   SizedObject::graph(Matrix::ones(4, 4), Matrix(4, 1)), 2});
  }
  return out;
}

std::string compat_config_for(const std::string& family, const std::string& sequence) {
  parse_family(family);
  parse_sequence(sequence);
  Json j;
  j["model"] = {{"family", family}};
  j["sequence"] = sequence;
  // A DeepSet is compatible with zero padding only when rho(0) = 0.
  if (family == "deepset" && sequence == "zero-set") j["model"]["rho_bias"] = false;
  return j.dump();
}

RunOutput run_compat(const std::string& config_json, std::optional<std::uint64_t> seed_override) {
  const Json j = parse_json(config_json);
  Node root(j, "$");
  const std::uint64_t seed = seed_override ? *seed_override : root.u64("seed", 0);
  if (seed_override) root.find("seed");
  Node mnode = root.obj("model");
  const ModelSpec spec = parse_model(mnode);
  const std::uint64_t init_seed = model_seed(mnode, seed);
  mnode.done();
  const std::string seq_name = root.str("sequence");
  const SequenceKind seq = enum_at(root.at("sequence"), [&] { return parse_sequence(seq_name); });
  const auto sizes = root.sizes("sizes", {4, 8, 16, 32});
  const auto multiples = root.sizes("multiples", {2, 3, 4});
  const std::size_t trials = root.u64("trials", 20);
  const double tol = root.num("tolerance", kCompatTolerance);
  std::optional<SizedObject> witness;
  if (root.has("input")) {
    Node in = root.obj("input");
    const ObjectKind kind = input_kind(spec.family);
    Matrix x = in.matrix("x");
    if (kind == ObjectKind::kGraph) witness = SizedObject::graph(in.matrix("a"), std::move(x));
    else if (kind == ObjectKind::kCloud) witness = SizedObject::cloud(std::move(x));
    else witness = SizedObject::set(std::move(x));
    in.done();
    try {
      witness->validate();
    } catch (const Error& e) {
      bad_config(in.path(), e.what());
    }
    if (witness->x.cols() != spec.in_dim) bad_config(in.at("x"), "column count must match in_dim");
  }
  root.done();
  if (!admissible(seq, input_kind(spec.family)))
    bad_config("$.sequence", seq_name + " does not carry the inputs of " + to_string(spec.family));
  for (std::size_t m : multiples)
    if (m < 1) bad_config("$.multiples", "multiples must be positive");
  if (!witness) {
    if (sizes.empty() || trials == 0) bad_config("$", "need sizes and trials");
    for (std::size_t n : sizes)
      if (n < 2) bad_config("$.sizes", "sizes must be at least 2");
  }

  const Model model(spec);
  const ParamStore ps = model.init(init_seed);
  const CompatModel cm = compat_model(model, ps);

  Json rep;
  rep["command"] = "compat";
  rep["model"] = model_json(spec);
  rep["init_seed"] = init_seed;
  rep["sequence"] = to_string(seq);
  rep["seed"] = seed;
  rep["tolerance"] = tol;
  Json devs = Json::array();
  double worst = -1.0;
  SizedObject worst_x;
  std::size_t worst_n = 0, worst_big = 0, worst_trial = 0;
  auto record = [&](const CheckReport& r, std::size_t n,
                    const std::function<SizedObject(std::size_t)>& regen) {
    for (const Deviation& d : r.deviations) {
      devs.push_back({{"n", n}, {"N", d.size}, {"trial", d.trial}, {"deviation", d.value}});
      const double v = std::isnan(d.value) ? INFINITY : d.value;
      if (v > worst) {
        worst = v;
        worst_n = n;
        worst_big = d.size;
        worst_trial = d.trial;
        worst_x = regen(d.trial);
      }
    }
  };
  if (witness) {
    const CheckReport r = check_compatibility(cm, *witness, seq, multiples, tol);
    record(r, witness->n(), [&](std::size_t) { return *witness; });
  } else {
    for (std::size_t n : sizes) {
      auto sampler = [&](RngStream& rng) { return random_input(spec, n, rng); };
      const std::uint64_t s = derive_seed(seed, n);
      const CheckReport r = check_compatibility(cm, sampler, seq, multiples, trials, s, tol);
      record(r, n, [&](std::size_t t) {
        RngStream rng(derive_seed(s, t));
        return sampler(rng);
      });
    }
  }
  const bool pass = worst <= tol;
  rep["pass"] = pass;
  rep["max_deviation"] = worst;
  rep["deviations"] = std::move(devs);
  if (!pass) {
    Json w = object_json(worst_x);
    w["n"] = worst_n;
    w["N"] = worst_big;
    w["trial"] = worst_trial;
    rep["witness"] = std::move(w);
  }
  RunOutput out;
  out.exit_code = pass ? 0 : 1;
  out.json = dump(rep);
  out.files.push_back({"compat.json", out.json});
  return out;
}

RunOutput run_transfer(const std::string& config_json, std::optional<std::uint64_t> seed_override) {
  const Json j = parse_json(config_json);
  Node root(j, "$");
  const std::uint64_t seed = seed_override ? *seed_override : root.u64("seed", 0);
  if (seed_override) root.find("seed");
  Node mnode = root.obj("model");
  const ModelSpec spec = parse_model(mnode);
  const std::uint64_t init_seed = model_seed(mnode, seed);
  mnode.done();
  const SamplerSpec sampler = parse_sampler(root.obj("sampler"), seed);
  TransferSpec ts;
  ts.sizes = root.sizes("sizes", {16, 64, 256, 1024, 4096});
  ts.trials = root.u64("trials", 100);
  ts.fit = root.flag("fit", true);
  std::string ref_kind = "largest";
  if (const Json* r = root.find("reference")) {
    if (r->is_string()) {
      ref_kind = r->get<std::string>();
      if (ref_kind != "largest" && ref_kind != "limit")
        bad_config("$.reference", "expected largest, limit or an array of numbers");
    } else {
      ref_kind = "given";
      ts.reference = TransferSpec::Reference::kGiven;
      const auto v = Node::as_reals(*r, "$.reference");
      ts.given = Matrix(1, v.size(), v);
    }
  }
  if (ts.sizes.empty() || ts.trials == 0) bad_config("$", "need sizes and trials");
  for (std::size_t i = 0; i < ts.sizes.size(); ++i)
    if (ts.sizes[i] == 0 || (i > 0 && ts.sizes[i] <= ts.sizes[i - 1]))
      bad_config("$.sizes", "sizes must be positive and strictly increasing");
  const std::size_t nodes = root.u64("limit_nodes", std::max<std::size_t>(1000000, 10 * ts.sizes.back()));
  root.done();
  if (input_kind(spec.family) != sampler.sample(1, 0).kind &&
      !(input_kind(spec.family) == ObjectKind::kSet &&
        sampler.limit.kind == Limit::Kind::kCloud))
    bad_config("$.sampler", "sampled objects do not match the inputs of " + to_string(spec.family));
  if (ref_kind == "limit") {
    const auto k = sampler.limit.kind;
    if (spec.family != Family::kNormDeepSet || spec.in_dim != 1 ||
        !(k == Limit::Kind::kScalarGaussian || k == Limit::Kind::kScalarUniform ||
          k == Limit::Kind::kFunction))
      bad_config("$.reference",
                 "limit reference needs a scalar norm-deepset on a scalar or function limit");
    if (nodes < 2) bad_config("$.limit_nodes", "need at least 2 nodes");
  }

  const Model model(spec);
  const ParamStore ps = model.init(init_seed);
  Json rep;
  rep["command"] = "transfer";
  rep["model"] = model_json(spec);
  rep["init_seed"] = init_seed;
  rep["scheme"] = to_string(sampler.scheme);
  rep["seed"] = seed;
  rep["sampler_seed"] = sampler.seed;
  rep["trials"] = ts.trials;
  rep["reference_kind"] = ref_kind;
  if (ref_kind == "limit") {
    ts.reference = TransferSpec::Reference::kGiven;
    ts.given = set_limit_value(model, ps, sampler.limit, nodes);
    const Matrix half = set_limit_value(model, ps, sampler.limit, nodes / 2);
    rep["limit_nodes"] = nodes;
    rep["reference_error"] = max_abs_diff(ts.given, half);
  }
  const TransferResult res = run_transfer(model, ps, sampler, ts);

  CsvWriter csv({"size", "trial", "value", "distance"});
  for (const auto& r : res.records)
    csv.row({std::to_string(r.size), std::to_string(r.trial), format_double(r.value),
             format_double(r.distance)});
  rep["reference"] = matrix_json(res.reference)[0];
  rep["sizes"] = res.rate.sizes;
  rep["median"] = res.rate.median;
  rep["lo"] = res.rate.lo;
  rep["hi"] = res.rate.hi;
  rep["median_abs_value"] = res.median_abs_value;
  rep["diverged"] = res.diverged;
  rep["fit_requested"] = ts.fit;
  rep["fitted"] = res.rate.fitted;
  if (res.rate.fitted) {
    rep["slope"] = res.rate.fit.slope;
    rep["intercept"] = res.rate.fit.intercept;
    rep["residual"] = res.rate.fit.residual;
    rep["dropped"] = res.rate.fit.dropped;
  }
  if (!res.rate.fit_error.empty()) rep["fit_error"] = res.rate.fit_error;

  RunOutput out;
  out.exit_code = ts.fit && !res.rate.fitted ? 1 : 0;
  out.csv = csv.str();
  out.json = dump(rep);
  out.files.push_back({"transfer.csv", out.csv});
  out.files.push_back({"transfer.json", out.json});
  return out;
}

RunOutput run_sizegen(const std::string& config_json, std::optional<std::uint64_t> seed_override,
                      const std::string& out_dir) {
  const Json j = parse_json(config_json);
  Node root(j, "$");
  const std::uint64_t seed = seed_override ? *seed_override : root.u64("seed", 0);
  if (seed_override) root.find("seed");

  TaskSpec task;
  {
    Node t = root.obj("task");
    task.task = enum_at(t.at("kind"), [&] { return parse_task(t.str("kind")); });
    if (task.task == TaskKind::kPopStats)
      task.pop = enum_at(t.at("stat"), [&] { return parse_popstat(t.str("stat", "rank1")); });
    if (task.task == TaskKind::kTriangleDensity)
      task.gen = enum_at(t.at("generator"),
                         [&] { return parse_triangle_gen(t.str("generator", "dense-uniform")); });
    if (task.task == TaskKind::kGwTlbPairs) task.gw_p = t.num("gw_p", 2.0);
    task.samples = t.u64("samples", task.samples);
    task.test_samples = t.u64("test_samples", task.test_samples);
    task.n_train = t.u64("n_train", task.n_train);
    task.n_test = t.sizes("n_test", task.n_test);
    task.seed = seed;
    t.done();
    try {
      task.validate();
    } catch (const Error& e) {
      bad_config(t.path(), e.what());
    }
  }
  const bool pair = task.task == TaskKind::kGwTlbPairs;
  ModelSpec spec;
  {
    Node m = root.obj("model");
    const bool has_out = m.has("out_dim");
    spec = parse_model(m);
    m.done();
    spec.in_dim = task.input_dim();
    if (pair && !has_out) spec.out_dim = 10;
    if (!pair) {
      if (has_out && spec.out_dim != 1) bad_config("$.model.out_dim", "the task has scalar targets");
      spec.out_dim = 1;
    }
  }
  TrainConfig cfg;
  if (pair) cfg.init_candidates = 5;
  if (root.has("train")) {
    Node t = root.obj("train");
    cfg.lr = t.num("lr", cfg.lr);
    cfg.weight_decay = t.num("weight_decay", cfg.weight_decay);
    cfg.beta1 = t.num("beta1", cfg.beta1);
    cfg.beta2 = t.num("beta2", cfg.beta2);
    cfg.eps = t.num("eps", cfg.eps);
    cfg.epochs = t.u64("epochs", cfg.epochs);
    cfg.batch_size = t.u64("batch_size", cfg.batch_size);
    cfg.patience = t.u64("patience", cfg.patience);
    cfg.init_candidates = t.u64("init_candidates", cfg.init_candidates);
    t.done();
    try {
      cfg.validate();
    } catch (const Error& e) {
      bad_config(t.path(), e.what());
    }
  }
  const std::size_t runs = root.u64("runs", 10);
  if (runs == 0) bad_config("$.runs", "must be positive");
  std::string cache = out_dir.empty() ? "" : (std::filesystem::path(out_dir) / "cache").string();
  if (const Json* c = root.find("cache_dir")) {
    if (c->is_null()) cache.clear();
    else cache = Node::as_str(*c, "$.cache_dir");
  }
  root.done();
  try {
    spec.validate();
  } catch (const Error& e) {
    bad_config("$.model", e.what());
  }

  const SizegenResult res = run_sizegen(task, spec, cfg, runs, cache);

  CsvWriter csv({"task", "model", "n", "run", "mse", "ratio"});
  const std::string task_name = to_string(task.task);
  const std::string model_name = to_string(spec.family);
  std::vector<double> base(runs, 0.0);
  for (const auto& r : res.rows)
    if (r.n == task.n_train) base[r.run] = r.mse;
  RunOutput out;
  Json rep;
  rep["command"] = "sizegen";
  rep["task"] = Json::parse(task.to_json());
  rep["model"] = model_json(spec);
  rep["train"] = {{"lr", cfg.lr},       {"weight_decay", cfg.weight_decay},
                  {"beta1", cfg.beta1}, {"beta2", cfg.beta2},
                  {"eps", cfg.eps},     {"epochs", cfg.epochs},
                  {"batch_size", cfg.batch_size}, {"patience", cfg.patience},
                  {"init_candidates", cfg.init_candidates}};
  rep["runs"] = runs;
  Json run_reps = Json::array();
  for (std::size_t k = 0; k < res.runs.size(); ++k) {
    const TrainResult& tr = res.runs[k];
    if (base[k] == 0.0) {
      for (const auto& r : res.rows)
        if (r.run == k && base[k] == 0.0) base[k] = r.mse;
    }
    run_reps.push_back({{"run", k},
                        {"best_epoch", tr.best_epoch},
                        {"inits_tried", tr.inits_tried},
                        {"initial_loss", tr.initial_loss},
                        {"train_loss", tr.train_loss},
                        {"val_loss", tr.val_loss}});
    const std::string name = "params/run" + std::to_string(k) + ".dlps";
    const auto bytes = tr.params.serialize();
    out.files.push_back({name, std::string(bytes.begin(), bytes.end())});
    out.files.push_back({name + ".json", tr.params.to_json()});
  }
  for (const auto& r : res.rows)
    csv.row({task_name, model_name, std::to_string(r.n), std::to_string(r.run), format_double(r.mse),
             format_double(r.mse / base[r.run])});
  rep["n_test"] = task.n_test;
  rep["median_ratio"] = res.median_ratio;
  rep["run_details"] = std::move(run_reps);
  out.csv = csv.str();
  out.json = dump(rep);
  out.files.insert(out.files.begin(), {"sizegen.json", out.json});
  out.files.insert(out.files.begin(), {"sizegen.csv", out.csv});
  return out;
}

RunOutput run_metric(const std::string& kind, const std::string& a_text, const std::string& b_text,
                     double p) {
  const Matrix a = parse_matrix(a_text);
  const bool has_b = !b_text.empty();
  const Matrix b = has_b ? parse_matrix(b_text) : Matrix();
  auto need_b = [&] { require(has_b, ErrorCode::kConfigError, kind + " needs two inputs"); };
  RunOutput out;
  auto one = [&](double v) { out.text = format_double(v) + "\n"; };
  if (kind == "w1d") {
    need_b();
    one(wasserstein_1d(a.data(), b.data(), p));
  } else if (kind == "wasserstein") {
    need_b();
    one(wasserstein_assign(a, b, p));
  } else if (kind == "hausdorff") {
    need_b();
    one(hausdorff(a, b));
  } else if (kind == "gw-tlb") {
    need_b();
    one(gw_tlb(a, b, p));
  } else if (kind == "sym-cloud") {
    need_b();
    one(sym_dist_cloud(a, b, p).value);
  } else if (kind == "cut") {
    Matrix d = a;
    if (has_b) {
      require(a.same_shape(b), ErrorCode::kInvalidInput, "cut: inputs differ in shape");
      d = a - b;
    }
    require(d.rows() == d.cols(), ErrorCode::kInvalidInput, "cut: matrix must be square");
    const CutBounds cb = cut_bounds(d, Matrix(d.rows(), 0));
    out.text = format_double(cb.lower) + " " + format_double(cb.upper);
    if (cb.exact) out.text += " " + format_double(*cb.exact);
    out.text += "\n";
  } else {
    fail(ErrorCode::kConfigError, "unknown metric '" + kind +
                                      "' (w1d, wasserstein, hausdorff, gw-tlb, sym-cloud, cut)");
  }
  return out;
}

}  // namespace dimlift

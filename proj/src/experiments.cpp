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

#include "dimlift/experiments.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <numbers>

#include "json.hpp"

#include "dimlift/error.hpp"
#include "dimlift/io.hpp"
#include "dimlift/metrics.hpp"
#include "dimlift/parallel.hpp"

namespace dimlift {

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);
constexpr std::size_t kPopDim = 32;
constexpr std::size_t kShapesPerClass = 40;

// Tags separating the independent random streams of one task seed.
constexpr std::uint64_t kTagFixed = 0xF1;
constexpr std::uint64_t kTagTrain = 0x71;
constexpr std::uint64_t kTagEval = 0xE1;
constexpr std::uint64_t kTagSplit = 0x5B;
constexpr std::uint64_t kTagInit = 0x1A;
constexpr std::uint64_t kTagEpoch = 0xEB;

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<E> all, const char* what) {
  for (E v : all)
    if (to_string(v) == s) return v;
  fail(ErrorCode::kConfigError, std::string("unknown ") + what + " '" + s + "'");
}

Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    require(d > 0.0, ErrorCode::kInvalidInput, "cholesky: matrix not positive definite");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

double log_det_spd(const Matrix& a) {
  const Matrix l = cholesky(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) acc += 2.0 * std::log(l(i, i));
  return acc;
}

Matrix block(const Matrix& a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  Matrix b(r1 - r0, c1 - c0);
  for (std::size_t i = r0; i < r1; ++i)
    for (std::size_t j = c0; j < c1; ++j) b(i - r0, j - c0) = a(i, j);
  return b;
}

Matrix random_cov(std::size_t d, RngStream& rng) {
  Matrix b(d, d);
  for (double& v : b.data()) v = rng.gaussian();
  Matrix s = matmul(b, b, false, true);
  s *= 1.0 / static_cast<double>(d);
  for (std::size_t i = 0; i < d; ++i) s(i, i) += 0.1;
  return s;
}

/// n rows drawn from N(0, sigma).
Matrix gaussian_rows(const Matrix& sigma, std::size_t n, RngStream& rng) {
  const Matrix l = cholesky(sigma);
  const std::size_t d = l.rows();
  Matrix x(n, d);
  std::vector<double> z(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : z) v = rng.gaussian();
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c <= r; ++c) acc += l(r, c) * z[c];
      x(i, r) = acc;
    }
  }
  return x;
}

// Quantities shared by every sample of a task (fixed by the task seed).
struct TaskFixed {
  Matrix rot_sigma;   // 2 x 2, rotation task
  Matrix corr_sigma;  // 16 x 16, correlation task
  std::vector<double> v;  // unit vector, rank-1 task
};

TaskFixed task_fixed(const TaskSpec& spec) {
  RngStream rng(derive_seed(spec.seed, kTagFixed));
  TaskFixed f;
  f.rot_sigma = random_cov(2, rng);
  f.corr_sigma = random_cov(kPopDim / 2, rng);
  f.v = rng.gaussian_vec(kPopDim);
  double nv = 0.0;
  for (double x : f.v) nv += x * x;
  for (double& x : f.v) x /= std::sqrt(nv);
  return f;
}

void popstats_sample(const TaskSpec& spec, const TaskFixed& fx, std::size_t n, RngStream& rng,
                     Matrix& x, double& target) {
  switch (spec.pop) {
    case PopStat::kRotation: {
      const double a = rng.uniform(0.0, std::numbers::pi);
      const Matrix r{{std::cos(a), -std::sin(a)}, {std::sin(a), std::cos(a)}};
      const Matrix s = matmul(matmul(r, fx.rot_sigma), r, false, true);
      x = gaussian_rows(s, n, rng);
      target = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * s(0, 0));
      return;
    }
    case PopStat::kCorrelation: {
      const double a = rng.uniform(-1.0, 1.0);
      const std::size_t h = kPopDim / 2;
      Matrix s(kPopDim, kPopDim);
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < h; ++j) {
          s(i, j) = s(i + h, j + h) = fx.corr_sigma(i, j);
          s(i, j + h) = s(i + h, j) = a * fx.corr_sigma(i, j);
        }
      x = gaussian_rows(s, n, rng);
      target = -0.5 * static_cast<double>(h) * std::log(1.0 - a * a);
      return;
    }
    case PopStat::kRank1: {
      const double lam = rng.uniform();
      Matrix s = Matrix::identity(kPopDim);
      for (std::size_t i = 0; i < kPopDim; ++i)
        for (std::size_t j = 0; j < kPopDim; ++j) s(i, j) += lam * fx.v[i] * fx.v[j];
      x = gaussian_rows(s, n, rng);
      target = gaussian_mi(s, kPopDim / 2);
      return;
    }
    case PopStat::kRandom: {
      const Matrix s = random_cov(kPopDim, rng);
      x = gaussian_rows(s, n, rng);
      target = gaussian_mi(s, kPopDim / 2);
      return;
    }
  }
}

Matrix circle_points(std::size_t n, RngStream& rng, double& target) {
  const double cx = rng.gaussian(), cy = rng.gaussian(), r = rng.uniform();
  Matrix x(n, 2);
  target = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
    x(i, 0) = cx + r * std::cos(t);
    x(i, 1) = cy + r * std::sin(t);
    target = std::max(target, std::hypot(x(i, 0), x(i, 1)));
  }
  return x;
}

SizedObject triangle_graph(TriangleGen gen, std::size_t n, RngStream& rng) {
  Matrix a(n, n), x(n, 1);
  if (gen == TriangleGen::kDenseUniform) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) a(i, j) = a(j, i) = rng.uniform();
    for (double& v : x.data()) v = rng.uniform();
  } else {
    const std::size_t k = 10 + rng.below(11);
    Matrix p(k, k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i; j < k; ++j) p(i, j) = p(j, i) = rng.uniform();
    const std::vector<double> gamma = rng.uniform_vec(k);
    std::vector<std::size_t> z(n);
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = rng.below(k);
      x[i] = gamma[z[i]];
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        a(i, j) = a(j, i) = rng.uniform() < p(z[i], z[j]) ? 1.0 : 0.0;
  }
  return SizedObject::graph(std::move(a), std::move(x));
}

/// Uniform samples on a sphere (cls 0) or an axis-aligned box surface
/// (cls 1), scaled by a random factor in [0.5, 1.5].
Matrix shape_cloud(int cls, std::size_t n, RngStream& rng) {
  const double s = rng.uniform(0.5, 1.5);
  Matrix x(n, 3);
  const double h[3] = {s * 1.0, s * 0.7, s * 0.5};
  const double area[3] = {h[1] * h[2], h[0] * h[2], h[0] * h[1]};  // faces normal to axis i
  const double total = area[0] + area[1] + area[2];
  for (std::size_t i = 0; i < n; ++i) {
    if (cls == 0) {
      double g[3], nrm = 0.0;
      for (double& v : g) {
        v = rng.gaussian();
        nrm += v * v;
      }
      nrm = std::sqrt(nrm);
      for (std::size_t c = 0; c < 3; ++c) x(i, c) = s * g[c] / nrm;
    } else {
      double u = rng.uniform() * total;
      std::size_t axis = 0;
      while (axis < 2 && u >= area[axis]) u -= area[axis++];
      const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
      for (std::size_t c = 0; c < 3; ++c)
        x(i, c) = c == axis ? side * h[c] : rng.uniform(-h[c], h[c]);
    }
  }
  return x;
}

std::vector<std::size_t> shuffled(std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  RngStream rng(seed);
  for (std::size_t i = count; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

void split(Dataset& d, const std::vector<std::size_t>& idx, double f_train, double f_val) {
  const std::size_t n = idx.size();
  const std::size_t nt = static_cast<std::size_t>(std::floor(f_train * n));
  const std::size_t nv = static_cast<std::size_t>(std::floor(f_val * n));
  d.train.assign(idx.begin(), idx.begin() + nt);
  d.val.assign(idx.begin() + nt, idx.begin() + nt + nv);
  d.test.assign(idx.begin() + nt + nv, idx.end());
}

std::uint64_t data_seed(const TaskSpec& spec, std::size_t n, DatasetRole role) {
  return derive_seed(derive_seed(spec.seed, role == DatasetRole::kTraining ? kTagTrain : kTagEval),
                     n);
}

// Little-endian binary helpers for the dataset cache.
template <typename T>
void put(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

struct Reader {
  const std::string& bytes;
  std::size_t pos = 0;
  template <typename T>
  T get() {
    require(pos + sizeof(T) <= bytes.size(), ErrorCode::kParseError, "dataset: truncated file");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string str(std::size_t len) {
    require(pos + len <= bytes.size(), ErrorCode::kParseError, "dataset: truncated file");
    std::string s = bytes.substr(pos, len);
    pos += len;
    return s;
  }
};

void put_shape(std::string& out, const Matrix& m) {
  put<std::uint64_t>(out, m.rows());
  put<std::uint64_t>(out, m.cols());
}

void put_payload(std::string& out, const Matrix& m) {
  for (double v : m.data()) put(out, v);
}

Matrix read_shape(Reader& r) {
  const auto rows = r.get<std::uint64_t>();
  const auto cols = r.get<std::uint64_t>();
  require(rows < (1u << 24) && cols < (1u << 24), ErrorCode::kParseError, "dataset: bad shape");
  return Matrix(rows, cols);
}

void read_payload(Reader& r, Matrix& m) {
  for (double& v : m.data()) v = r.get<double>();
}

void put_index(std::string& out, const std::vector<std::size_t>& v) {
  put<std::uint64_t>(out, v.size());
  for (std::size_t i : v) put<std::uint64_t>(out, i);
}

std::vector<std::size_t> read_index(Reader& r, std::size_t bound) {
  const auto count = r.get<std::uint64_t>();
  require(count <= bound, ErrorCode::kParseError, "dataset: bad index count");
  std::vector<std::size_t> v(count);
  for (auto& i : v) {
    i = r.get<std::uint64_t>();
    require(i < bound, ErrorCode::kParseError, "dataset: index out of range");
  }
  return v;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

double sample_mse(const Matrix& pred, const Matrix& target) {
  double acc = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) acc += (pred[k] - target[k]) * (pred[k] - target[k]);
  return acc / static_cast<double>(pred.size());
}

}  // namespace

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kPopStats: return "popstats";
    case TaskKind::kMaxDist: return "maxdist";
    case TaskKind::kTriangleDensity: return "triangle-density";
    case TaskKind::kGwTlbPairs: return "gw-tlb";
  }
  return "?";
}

TaskKind parse_task(const std::string& s) {
  return parse_enum(s,
                    {TaskKind::kPopStats, TaskKind::kMaxDist, TaskKind::kTriangleDensity,
                     TaskKind::kGwTlbPairs},
                    "task");
}

std::string to_string(PopStat p) {
  switch (p) {
    case PopStat::kRotation: return "rotation";
    case PopStat::kCorrelation: return "correlation";
    case PopStat::kRank1: return "rank1";
    case PopStat::kRandom: return "random";
  }
  return "?";
}

PopStat parse_popstat(const std::string& s) {
  return parse_enum(
      s, {PopStat::kRotation, PopStat::kCorrelation, PopStat::kRank1, PopStat::kRandom},
      "population statistic");
}

std::string to_string(TriangleGen g) {
  return g == TriangleGen::kDenseUniform ? "dense-uniform" : "sbm";
}

TriangleGen parse_triangle_gen(const std::string& s) {
  return parse_enum(s, {TriangleGen::kDenseUniform, TriangleGen::kSbm}, "graph generator");
}

void TaskSpec::validate() const {
  require(samples >= 10, ErrorCode::kConfigError, "task: samples must be at least 10");
  require(test_samples >= 1, ErrorCode::kConfigError, "task: test_samples must be positive");
  require(n_train >= 1, ErrorCode::kConfigError, "task: n_train must be positive");
  require(!n_test.empty(), ErrorCode::kConfigError, "task: n_test must not be empty");
  require(n_train <= *std::min_element(n_test.begin(), n_test.end()), ErrorCode::kConfigError,
          "task: n_train must not exceed the smallest test size");
  for (std::size_t i = 1; i < n_test.size(); ++i)
    require(n_test[i] > n_test[i - 1], ErrorCode::kConfigError,
            "task: n_test must be strictly increasing");
  if (task == TaskKind::kGwTlbPairs) {
    require(n_train >= 3, ErrorCode::kConfigError, "task: gw-tlb needs at least 3 points");
    require(gw_p >= 1.0, ErrorCode::kConfigError, "task: gw_p must be at least 1");
  }
}

std::size_t TaskSpec::input_dim() const {
  switch (task) {
    case TaskKind::kPopStats: return pop == PopStat::kRotation ? 2 : kPopDim;
    case TaskKind::kMaxDist: return 2;
    case TaskKind::kTriangleDensity: return 1;
    case TaskKind::kGwTlbPairs: return 3;
  }
  return 0;
}

std::string TaskSpec::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = to_string(task);
  if (task == TaskKind::kPopStats) j["stat"] = to_string(pop);
  if (task == TaskKind::kTriangleDensity) j["generator"] = to_string(gen);
  if (task == TaskKind::kGwTlbPairs) j["gw_p"] = gw_p;
  j["samples"] = samples;
  j["test_samples"] = test_samples;
  j["n_train"] = n_train;
  j["n_test"] = n_test;
  j["seed"] = seed;
  return j.dump();
}

Matrix triangle_density(const Matrix& a, const Matrix& x) {
  const std::size_t n = a.rows();
  require(a.cols() == n && x.rows() == n && x.cols() == 1, ErrorCode::kInvalidInput,
          "triangle_density: shape mismatch");
  Matrix ax = a;  // A D
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) ax(i, j) *= x[j];
  const Matrix c = matmul(ax, ax);  // A D A D
  Matrix y(n, 1);
  const double inv = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += c(i, k) * a(k, i);
    y[i] = x[i] * acc * inv;
  }
  return y;
}

double gaussian_mi(const Matrix& sigma, std::size_t k) {
  const std::size_t d = sigma.rows();
  require(sigma.cols() == d && k > 0 && k < d, ErrorCode::kInvalidInput,
          "gaussian_mi: bad block split");
  return 0.5 * (log_det_spd(block(sigma, 0, k, 0, k)) + log_det_spd(block(sigma, k, d, k, d)) -
                log_det_spd(sigma));
}

Dataset gen_task(const TaskSpec& spec, std::size_t n, DatasetRole role) {
  spec.validate();
  require(n >= 1, ErrorCode::kInvalidInput, "gen_task: n must be positive");
  const std::uint64_t seed = data_seed(spec, n, role);
  const bool training = role == DatasetRole::kTraining;
  Dataset d;
  d.n = n;

  if (spec.task == TaskKind::kGwTlbPairs) {
    require(n >= 3, ErrorCode::kInvalidInput, "gen_task: gw-tlb needs at least 3 points");
    // Objects: [train spheres, train boxes, test spheres, test boxes] when
    // training; a single sphere and box half otherwise.
    const std::size_t halves = training ? 2 : 1;
    const std::size_t per = kShapesPerClass;
    d.objects.resize(2 * per * halves);
    parallel_for(d.objects.size(), [&](std::size_t i) {
      RngStream rng(derive_seed(seed, i));
      const int cls = static_cast<int>((i / per) % 2);
      d.objects[i] = SizedObject::cloud(shape_cloud(cls, n, rng));
    });
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t h = 0; h < halves; ++h)
      for (std::size_t i = 0; i < per; ++i)
        for (std::size_t j = 0; j < per; ++j)
          pairs.emplace_back(2 * per * h + i, 2 * per * h + per + j);
    if (!training) {
      const auto pick = shuffled(pairs.size(), derive_seed(seed, kTagSplit));
      std::vector<std::pair<std::size_t, std::size_t>> kept;
      for (std::size_t k = 0; k < std::min(spec.test_samples, pairs.size()); ++k)
        kept.push_back(pairs[pick[k]]);
      std::sort(kept.begin(), kept.end());
      pairs = std::move(kept);
    }
    d.samples.resize(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t k) {
      const auto [i, j] = pairs[k];
      d.samples[k] = {i, j, Matrix(1, 1, gw_tlb(d.objects[i].x, d.objects[j].x, spec.gw_p))};
    });
    if (training) {
      const std::size_t half = per * per;
      const auto order = shuffled(half, derive_seed(seed, kTagSplit));
      const std::size_t nt = half * 4 / 5;
      d.train.assign(order.begin(), order.begin() + nt);
      d.val.assign(order.begin() + nt, order.end());
      for (std::size_t k = half; k < 2 * half; ++k) d.test.push_back(k);
    } else {
      for (std::size_t k = 0; k < d.samples.size(); ++k) d.test.push_back(k);
    }
    return d;
  }

  const std::size_t count = training ? spec.samples : spec.test_samples;
  const TaskFixed fx = task_fixed(spec);
  d.objects.resize(count);
  d.samples.resize(count);
  parallel_for(count, [&](std::size_t i) {
    RngStream rng(derive_seed(seed, i));
    Matrix target(1, 1);
    switch (spec.task) {
      case TaskKind::kPopStats: {
        Matrix x;
        popstats_sample(spec, fx, n, rng, x, target[0]);
        d.objects[i] = SizedObject::set(std::move(x));
        break;
      }
      case TaskKind::kMaxDist:
        d.objects[i] = SizedObject::set(circle_points(n, rng, target[0]));
        break;
      case TaskKind::kTriangleDensity:
        d.objects[i] = triangle_graph(spec.gen, n, rng);
        target = triangle_density(d.objects[i].a, d.objects[i].x);
        break;
      case TaskKind::kGwTlbPairs: break;
    }
    d.samples[i] = {i, std::nullopt, std::move(target)};
  });
  if (training) {
    const auto idx = shuffled(count, derive_seed(seed, kTagSplit));
    switch (spec.task) {
      case TaskKind::kPopStats: split(d, idx, 0.5, 0.25); break;
      case TaskKind::kMaxDist: split(d, idx, 0.8, 0.1); break;
      default: split(d, idx, 0.6, 0.2); break;
    }
  } else {
    for (std::size_t k = 0; k < count; ++k) d.test.push_back(k);
  }
  return d;
}

std::string serialize_dataset(const TaskSpec& spec, const Dataset& d, DatasetRole role) {
  std::string out = "DLDS";
  put<std::uint32_t>(out, 1);
  const std::string js = spec.to_json();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(js.size()));
  out += js;
  put<std::uint64_t>(out, spec.seed);
  put<std::uint64_t>(out, d.n);
  put<std::uint64_t>(out, d.samples.size());
  put<std::uint8_t>(out, role == DatasetRole::kTraining ? 0 : 1);
  put<std::uint64_t>(out, d.objects.size());
  for (const auto& o : d.objects) {
    put<std::uint8_t>(out, static_cast<std::uint8_t>(o.kind));
    put_shape(out, o.a);
    put_shape(out, o.x);
  }
  for (const auto& s : d.samples) {
    put<std::uint64_t>(out, s.first);
    put<std::uint64_t>(out, s.second ? *s.second : kNone);
    put_shape(out, s.target);
  }
  put_index(out, d.train);
  put_index(out, d.val);
  put_index(out, d.test);
  for (const auto& o : d.objects) {
    put_payload(out, o.a);
    put_payload(out, o.x);
  }
  for (const auto& s : d.samples) put_payload(out, s.target);
  return out;
}

Dataset deserialize_dataset(const std::string& bytes, const TaskSpec& spec, std::size_t n,
                            DatasetRole role) {
  Reader r{bytes};
  require(r.str(4) == "DLDS", ErrorCode::kParseError, "dataset: bad magic");
  require(r.get<std::uint32_t>() == 1, ErrorCode::kParseError, "dataset: unsupported version");
  const auto len = r.get<std::uint32_t>();
  require(r.str(len) == spec.to_json(), ErrorCode::kParseError, "dataset: task mismatch");
  require(r.get<std::uint64_t>() == spec.seed, ErrorCode::kParseError, "dataset: seed mismatch");
  require(r.get<std::uint64_t>() == n, ErrorCode::kParseError, "dataset: size mismatch");
  const auto count = r.get<std::uint64_t>();
  require(r.get<std::uint8_t>() == (role == DatasetRole::kTraining ? 0 : 1),
          ErrorCode::kParseError, "dataset: role mismatch");
  const auto nobj = r.get<std::uint64_t>();
  require(nobj <= bytes.size() && count <= bytes.size(), ErrorCode::kParseError,
          "dataset: bad counts");
  Dataset d;
  d.n = n;
  d.objects.resize(nobj);
  for (auto& o : d.objects) {
    const auto kind = r.get<std::uint8_t>();
    require(kind <= 2, ErrorCode::kParseError, "dataset: bad object kind");
    o.kind = static_cast<ObjectKind>(kind);
    o.a = read_shape(r);
    o.x = read_shape(r);
  }
  d.samples.resize(count);
  for (auto& s : d.samples) {
    s.first = r.get<std::uint64_t>();
    const auto second = r.get<std::uint64_t>();
    require(s.first < nobj && (second == kNone || second < nobj), ErrorCode::kParseError,
            "dataset: bad object reference");
    if (second != kNone) s.second = second;
    s.target = read_shape(r);
  }
  d.train = read_index(r, count);
  d.val = read_index(r, count);
  d.test = read_index(r, count);
  for (auto& o : d.objects) {
    read_payload(r, o.a);
    read_payload(r, o.x);
  }
  for (auto& s : d.samples) read_payload(r, s.target);
  require(r.pos == bytes.size(), ErrorCode::kParseError, "dataset: trailing bytes");
  return d;
}

Dataset cached_task(const TaskSpec& spec, std::size_t n, DatasetRole role, const std::string& dir) {
  if (dir.empty()) return gen_task(spec, n, role);
  namespace fs = std::filesystem;
  char name[64];
  std::snprintf(name, sizeof name, "%016llx-n%zu-%s.dlds",
                static_cast<unsigned long long>(fnv1a(spec.to_json())), n,
                role == DatasetRole::kTraining ? "train" : "eval");
  const fs::path path = fs::path(dir) / name;
  if (fs::exists(path)) {
    try {
      return deserialize_dataset(read_file(path.string()), spec, n, role);
    } catch (const Error&) {
      // Stale or damaged cache: fall through and regenerate.
    }
  }
  Dataset d = gen_task(spec, n, role);
  fs::create_directories(dir);
  write_file_atomic(path.string(), serialize_dataset(spec, d, role));
  return d;
}

void TrainConfig::validate() const {
  require(lr > 0.0 && std::isfinite(lr), ErrorCode::kConfigError, "train: lr must be positive");
  require(weight_decay >= 0.0, ErrorCode::kConfigError, "train: weight_decay must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorCode::kConfigError,
          "train: betas must lie in [0, 1)");
  require(eps > 0.0, ErrorCode::kConfigError, "train: eps must be positive");
  require(epochs >= 1, ErrorCode::kConfigError, "train: epochs must be positive");
  require(batch_size >= 1, ErrorCode::kConfigError, "train: batch_size must be positive");
  require(patience >= 1, ErrorCode::kConfigError, "train: patience must be at least 1");
  require(init_candidates >= 1, ErrorCode::kConfigError, "train: init_candidates must be >= 1");
}

AdamW::AdamW(std::size_t size, const TrainConfig& cfg)
    : lr_(cfg.lr), cfg_(cfg), m_(size, 0.0), v_(size, 0.0) {}

void AdamW::step(std::vector<double>& params, const std::vector<double>& grad) {
  require(params.size() == m_.size() && grad.size() == m_.size(), ErrorCode::kInvalidInput,
          "AdamW: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    params[k] *= 1.0 - lr_ * cfg_.weight_decay;
    m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * grad[k];
    v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * grad[k] * grad[k];
    params[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + cfg_.eps);
  }
}

Predictor::Predictor(ModelSpec spec, bool pair_head, std::size_t head_dim)
    : model_(std::move(spec)), pair_(pair_head), head_dim_(head_dim) {
  if (pair_)
    require(is_invariant(model_.spec().family) && model_.spec().out_dim == head_dim_,
            ErrorCode::kConfigError, "pair head needs an invariant model with out_dim = " +
                                         std::to_string(head_dim_));
}

ParamStore Predictor::init(std::uint64_t seed) const {
  ParamStore ps = model_.init(seed);
  if (pair_) {
    RngStream rng(derive_seed(seed, 0x6E));
    ps.add_uniform("gw.W", head_dim_, head_dim_, 1.0 / std::sqrt(static_cast<double>(head_dim_)),
                   rng);
    ps.set(ps.add("gw.a", 1, 1), Matrix(1, 1, 1.0));
    ps.add("gw.b", 1, 1);
  }
  return ps;
}

ad::Var Predictor::output(ad::Tape& t, const Dataset& d, const Sample& s,
                          bool* degenerate) const {
  const ad::Var f1 = model_.forward(t, d.objects.at(s.first), degenerate).x;
  if (!pair_) return f1;
  require(s.second.has_value(), ErrorCode::kInvalidInput, "pair head needs a sample pair");
  bool deg2 = false;
  const ad::Var f2 = model_.forward(t, d.objects.at(*s.second), &deg2).x;
  if (degenerate) *degenerate = *degenerate || deg2;
  const ad::Var e = ad::matmul(t, ad::sub(t, f1, f2), t.param("gw.W"), false, true);
  const ad::Var q = ad::sum_all(t, ad::mul(t, e, e));
  return ad::add(t, ad::scalar_mul(t, t.param("gw.a"), q), t.param("gw.b"));
}

ad::Var Predictor::loss(ad::Tape& t, const Dataset& d, const Sample& s, bool* degenerate) const {
  return ad::mse(t, output(t, d, s, degenerate), s.target);
}

Matrix Predictor::predict(const ParamStore& ps, const Dataset& d, const Sample& s) const {
  ad::Tape t(&ps);
  return t.value(output(t, d, s, nullptr));
}

double evaluate(const Predictor& p, const ParamStore& ps, const Dataset& d,
                const std::vector<std::size_t>& idx) {
  require(!idx.empty(), ErrorCode::kInvalidInput, "evaluate: no samples");
  std::vector<double> err(idx.size());
  if (p.pair_head()) {
    // Features once per object, then the cheap head per pair.
    std::vector<char> used(d.objects.size(), 0);
    for (std::size_t k : idx) {
      used[d.samples[k].first] = 1;
      used[*d.samples[k].second] = 1;
    }
    std::vector<Matrix> feat(d.objects.size());
    parallel_for(d.objects.size(), [&](std::size_t i) {
      if (used[i]) feat[i] = p.model().predict(ps, d.objects[i]);
    });
    const Matrix w = ps.get("gw.W");
    const double a = ps.get("gw.a")[0], b = ps.get("gw.b")[0];
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Sample& s = d.samples[idx[k]];
      const Matrix e = matmul(feat[s.first] - feat[*s.second], w, false, true);
      err[k] = sample_mse(Matrix(1, 1, a * dot(e, e) + b), s.target);
    }
  } else {
    parallel_for(idx.size(), [&](std::size_t k) {
      const Sample& s = d.samples[idx[k]];
      err[k] = sample_mse(p.model().predict(ps, d.objects[s.first]), s.target);
    });
  }
  double acc = 0.0;
  for (double e : err) acc += e;
  return acc / static_cast<double>(err.size());
}

namespace {

struct BatchGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

BatchGrad batch_grad(const Predictor& p, const ParamStore& ps, const Dataset& d,
                     const std::size_t* idx, std::size_t count) {
  std::vector<std::vector<double>> grads(count);
  std::vector<double> losses(count, 0.0);
  std::vector<char> skipped(count, 0);
  parallel_for(count, [&](std::size_t b) {
    ad::Tape t(&ps);
    bool degenerate = false;
    const ad::Var loss = p.loss(t, d, d.samples[idx[b]], &degenerate);
    if (degenerate) {
      skipped[b] = 1;
      return;
    }
    t.backward(loss);
    losses[b] = t.value(loss)[0];
    grads[b] = t.param_grads();
  });
  BatchGrad r;
  r.grad.assign(ps.size(), 0.0);
  std::size_t used = 0;
  for (std::size_t b = 0; b < count; ++b) {
    if (skipped[b]) continue;
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

}  // namespace

TrainResult train(const Predictor& p, const Dataset& d, const TrainConfig& cfg,
                  std::uint64_t seed) {
  cfg.validate();
  require(!d.train.empty(), ErrorCode::kInvalidInput, "train: empty training split");
  const auto& monitor = d.val.empty() ? d.train : d.val;

  TrainResult res;
  res.inits_tried = cfg.init_candidates;
  ParamStore ps;
  double best_init = 0.0;
  for (std::size_t k = 0; k < cfg.init_candidates; ++k) {
    ParamStore cand = p.init(derive_seed(derive_seed(seed, kTagInit), k));
    const double v = cfg.init_candidates == 1 ? 0.0 : evaluate(p, cand, d, monitor);
    if (k == 0 || v < best_init) {
      best_init = v;
      ps = std::move(cand);
    }
  }

  res.initial_loss = evaluate(p, ps, d, d.train);
  AdamW opt(ps.size(), cfg);
  double best = std::numeric_limits<double>::infinity();
  std::size_t since = 0;
  res.params = ps;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto perm = shuffled(d.train.size(), derive_seed(derive_seed(seed, kTagEpoch), epoch));
    std::vector<std::size_t> order(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) order[i] = d.train[perm[i]];
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t cnt = std::min(cfg.batch_size, order.size() - b);
      BatchGrad g = batch_grad(p, ps, d, order.data() + b, cnt);
      if (!std::isfinite(g.loss))
        throw TrainDiverged(epoch, "training diverged at epoch " + std::to_string(epoch));
      epoch_loss += g.loss * static_cast<double>(cnt);
      opt.step(ps.values(), g.grad);
    }
    res.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    const double val = evaluate(p, ps, d, monitor);
    if (!std::isfinite(val))
      throw TrainDiverged(epoch, "validation loss diverged at epoch " + std::to_string(epoch));
    res.val_loss.push_back(val);
    if (val < best) {
      best = val;
      res.params = ps;
      res.best_epoch = epoch;
      since = 0;
    } else if (++since >= cfg.patience) {
      opt.set_lr(opt.lr() * 0.5);
      since = 0;
    }
    res.best_val.push_back(best);
  }
  return res;
}

namespace {

std::vector<Dataset> eval_sets(const TaskSpec& spec, const std::string& cache_dir) {
  std::vector<Dataset> sets;
  for (std::size_t n : spec.n_test)
    sets.push_back(cached_task(spec, n, DatasetRole::kEvaluation, cache_dir));
  return sets;
}

std::vector<SizegenRow> eval_rows(const Predictor& p, const ParamStore& ps,
                                  const std::vector<Dataset>& sets, std::size_t run) {
  std::vector<SizegenRow> rows;
  for (const Dataset& d : sets) rows.push_back({d.n, run, evaluate(p, ps, d, d.test)});
  return rows;
}

}  // namespace

std::vector<SizegenRow> evaluate_sizes(const Predictor& p, const ParamStore& ps,
                                       const TaskSpec& spec, std::size_t run,
                                       const std::string& cache_dir) {
  return eval_rows(p, ps, eval_sets(spec, cache_dir), run);
}

SizegenResult run_sizegen(const TaskSpec& task, const ModelSpec& model, const TrainConfig& cfg,
                          std::size_t runs, const std::string& cache_dir) {
  task.validate();
  cfg.validate();
  require(runs >= 1, ErrorCode::kConfigError, "sizegen: runs must be positive");
  ModelSpec ms = model;
  ms.in_dim = task.input_dim();
  const bool pair = task.task == TaskKind::kGwTlbPairs;
  require(input_kind(ms.family) == (task.task == TaskKind::kTriangleDensity ? ObjectKind::kGraph
                                    : pair                                  ? ObjectKind::kCloud
                                                                            : ObjectKind::kSet),
          ErrorCode::kConfigError,
          "model family " + to_string(ms.family) + " does not fit task " + to_string(task.task));
  require(is_invariant(ms.family) == (task.task != TaskKind::kTriangleDensity),
          ErrorCode::kConfigError, "task output type does not match the model family");
  ms.validate();
  const Predictor pred(ms, pair, ms.out_dim);

  const Dataset train_set = cached_task(task, task.n_train, DatasetRole::kTraining, cache_dir);
  const std::vector<Dataset> sets = eval_sets(task, cache_dir);

  SizegenResult res;
  std::vector<std::vector<double>> ratios(task.n_test.size());
  for (std::size_t run = 0; run < runs; ++run) {
    TrainResult tr = train(pred, train_set, cfg, derive_seed(task.seed, 1000 + run));
    auto rows = eval_rows(pred, tr.params, sets, run);
    double base = 0.0;
    for (const auto& r : rows)
      if (r.n == task.n_train) base = r.mse;
    if (base == 0.0) base = evaluate(pred, tr.params, train_set, train_set.test);
    for (std::size_t k = 0; k < rows.size(); ++k) ratios[k].push_back(rows[k].mse / base);
    res.rows.insert(res.rows.end(), rows.begin(), rows.end());
    res.runs.push_back(std::move(tr));
  }
  for (auto& r : ratios) {
    std::sort(r.begin(), r.end());
    const std::size_t m = r.size();
    res.median_ratio.push_back(m % 2 ? r[m / 2] : 0.5 * (r[m / 2 - 1] + r[m / 2]));
  }
  return res;
}

}  // namespace dimlift

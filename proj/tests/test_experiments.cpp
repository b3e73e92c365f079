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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "dimlift/error.hpp"
#include "dimlift/experiments.hpp"
#include "dimlift/io.hpp"
#include "dimlift/metrics.hpp"

using namespace dimlift;

namespace {

Matrix triangle_oracle(const Matrix& a, const Matrix& x) {
  const std::size_t n = a.rows();
  Matrix y(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) acc += a(i, j) * a(j, k) * a(k, i) * x[i] * x[j] * x[k];
    y[i] = acc / (n * n);
  }
  return y;
}

double eigen_logdet(const Matrix& m, std::size_t r0, std::size_t r1) {
  Eigen::MatrixXd e(r1 - r0, r1 - r0);
  for (std::size_t i = r0; i < r1; ++i)
    for (std::size_t j = r0; j < r1; ++j) e(i - r0, j - r0) = m(i, j);
  return std::log(e.determinant());
}

TaskSpec small_task(TaskKind k) {
  TaskSpec t;
  t.task = k;
  t.samples = 40;
  t.test_samples = 12;
  t.n_train = k == TaskKind::kTriangleDensity ? 6 : 8;
  t.n_test = {t.n_train, 2 * t.n_train};
  t.seed = 21;
  return t;
}

void expect_partition(const Dataset& d) {
  std::vector<std::size_t> all(d.train);
  all.insert(all.end(), d.val.begin(), d.val.end());
  all.insert(all.end(), d.test.begin(), d.test.end());
  std::sort(all.begin(), all.end());
  ASSERT_EQ(all.size(), d.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
}

Dataset constant_dataset(double value) {
  Dataset d;
  RngStream rng(8);
  for (std::size_t i = 0; i < 40; ++i) {
    Matrix x(5, 1);
    for (double& v : x.data()) v = rng.gaussian();
    d.objects.push_back(SizedObject::set(x));
    d.samples.push_back({i, std::nullopt, Matrix(1, 1, value)});
    (i < 30 ? d.train : i < 35 ? d.val : d.test).push_back(i);
  }
  d.n = 5;
  return d;
}

ModelSpec tiny(Family f) {
  ModelSpec s;
  s.family = f;
  s.widths = {6};
  s.head = {6};
  return s;
}

}  // namespace

TEST(Targets, TriangleDensityAllOnes) {
  const Matrix y = triangle_density(Matrix::ones(5, 5), Matrix::ones(5, 1));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Targets, TriangleDensityMatchesTripleSum) {
  RngStream rng(4);
  for (std::size_t n : {3u, 7u, 12u}) {
    Matrix a(n, n), x(n, 1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) a(i, j) = a(j, i) = rng.uniform();
    for (double& v : x.data()) v = rng.uniform(-1, 1);
    EXPECT_LE(max_abs_diff(triangle_density(a, x), triangle_oracle(a, x)), 1e-14);
  }
}

TEST(Targets, MutualInformationClosedForm) {
  Matrix s = Matrix::identity(32);
  EXPECT_NEAR(gaussian_mi(s, 16), 0.0, 1e-14);
  RngStream rng(6);
  std::vector<double> v = rng.gaussian_vec(32);
  const double nv = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t j = 0; j < 32; ++j) s(i, j) += 0.8 * v[i] * v[j] / (nv * nv);
  const double want =
      0.5 * (eigen_logdet(s, 0, 16) + eigen_logdet(s, 16, 32) - eigen_logdet(s, 0, 32));
  EXPECT_NEAR(gaussian_mi(s, 16), want, 1e-12);
  EXPECT_GT(gaussian_mi(s, 16), 0.0);
}

TEST(GenTask, MaxDistTargetsAreMaxNorms) {
  const TaskSpec t = small_task(TaskKind::kMaxDist);
  const Dataset d = gen_task(t, 8, DatasetRole::kTraining);
  ASSERT_EQ(d.samples.size(), 40u);
  expect_partition(d);
  EXPECT_EQ(d.train.size(), 32u);
  EXPECT_EQ(d.val.size(), 4u);
  for (const auto& s : d.samples) {
    const Matrix& x = d.objects[s.first].x;
    double m = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) m = std::max(m, std::hypot(x(i, 0), x(i, 1)));
    EXPECT_EQ(s.target[0], m);
  }
}

TEST(GenTask, PopStatsShapesAndTargets) {
  for (PopStat p : {PopStat::kRotation, PopStat::kCorrelation, PopStat::kRank1, PopStat::kRandom}) {
    TaskSpec t = small_task(TaskKind::kPopStats);
    t.pop = p;
    const Dataset d = gen_task(t, 8, DatasetRole::kTraining);
    expect_partition(d);
    EXPECT_EQ(d.train.size(), 20u);
    EXPECT_EQ(d.objects[0].x.cols(), t.input_dim());
    for (const auto& s : d.samples) {
      EXPECT_TRUE(std::isfinite(s.target[0]));
      if (p != PopStat::kRotation) EXPECT_GE(s.target[0], 0.0);
    }
  }
}

TEST(GenTask, TriangleGraphsAreSymmetric) {
  for (TriangleGen g : {TriangleGen::kDenseUniform, TriangleGen::kSbm}) {
    TaskSpec t = small_task(TaskKind::kTriangleDensity);
    t.gen = g;
    const Dataset d = gen_task(t, 6, DatasetRole::kTraining);
    expect_partition(d);
    for (const auto& s : d.samples) {
      const auto& o = d.objects[s.first];
      EXPECT_TRUE(is_symmetric(o.a, 0.0));
      if (g == TriangleGen::kSbm)
        for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(o.a(i, i), 0.0);
      EXPECT_EQ(s.target, triangle_density(o.a, o.x));
    }
  }
}

TEST(GenTask, GwPairsAreCrossClass) {
  TaskSpec t = small_task(TaskKind::kGwTlbPairs);
  t.n_train = 5;
  t.n_test = {5, 6};
  const Dataset d = gen_task(t, 5, DatasetRole::kTraining);
  EXPECT_EQ(d.objects.size(), 160u);
  EXPECT_EQ(d.samples.size(), 3200u);
  expect_partition(d);
  for (std::size_t k : d.train) EXPECT_LT(*d.samples[k].second, 80u);
  for (std::size_t k : d.test) EXPECT_GE(d.samples[k].first, 80u);
  const auto& s = d.samples[17];
  EXPECT_EQ(s.target[0], gw_tlb(d.objects[s.first].x, d.objects[*s.second].x, 2.0));
  EXPECT_LT(s.first % 80, 40u);
  EXPECT_GE(*s.second % 80, 40u);
  const Dataset e = gen_task(t, 6, DatasetRole::kEvaluation);
  EXPECT_EQ(e.samples.size(), 12u);
  EXPECT_EQ(e.test.size(), 12u);
}

TEST(GenTask, DeterministicAndRoleSeparated) {
  const TaskSpec t = small_task(TaskKind::kMaxDist);
  const auto a = serialize_dataset(t, gen_task(t, 8, DatasetRole::kTraining), DatasetRole::kTraining);
  const auto b = serialize_dataset(t, gen_task(t, 8, DatasetRole::kTraining), DatasetRole::kTraining);
  EXPECT_EQ(a, b);
  const Dataset e = gen_task(t, 8, DatasetRole::kEvaluation);
  EXPECT_EQ(e.samples.size(), 12u);
  EXPECT_NE(e.objects[0].x, gen_task(t, 8, DatasetRole::kTraining).objects[0].x);
}

TEST(GenTask, RejectsBadSpecs) {
  TaskSpec t = small_task(TaskKind::kMaxDist);
  t.samples = 9;
  EXPECT_THROW(gen_task(t, 8, DatasetRole::kTraining), Error);
  t = small_task(TaskKind::kMaxDist);
  t.n_test = {4, 16};
  EXPECT_THROW(t.validate(), Error);
  EXPECT_THROW(parse_task("maxdistance"), Error);
  EXPECT_EQ(parse_popstat("rank1"), PopStat::kRank1);
}

TEST(DatasetCache, RoundTripAndRejects) {
  TaskSpec t = small_task(TaskKind::kTriangleDensity);
  const Dataset d = gen_task(t, 6, DatasetRole::kTraining);
  const std::string bytes = serialize_dataset(t, d, DatasetRole::kTraining);
  EXPECT_EQ(bytes.substr(0, 4), "DLDS");
  const Dataset r = deserialize_dataset(bytes, t, 6, DatasetRole::kTraining);
  EXPECT_EQ(serialize_dataset(t, r, DatasetRole::kTraining), bytes);
  EXPECT_THROW(deserialize_dataset(bytes, t, 7, DatasetRole::kTraining), Error);
  EXPECT_THROW(deserialize_dataset(bytes, t, 6, DatasetRole::kEvaluation), Error);
  EXPECT_THROW(deserialize_dataset(bytes.substr(0, bytes.size() - 3), t, 6, DatasetRole::kTraining),
               Error);
  EXPECT_THROW(deserialize_dataset(bytes + "x", t, 6, DatasetRole::kTraining), Error);
  TaskSpec other = t;
  other.seed = 22;
  EXPECT_THROW(deserialize_dataset(bytes, other, 6, DatasetRole::kTraining), Error);
}

TEST(DatasetCache, CachedTaskReusesFile) {
  const auto dir = std::filesystem::temp_directory_path() / "dimlift_cache_test";
  std::filesystem::remove_all(dir);
  const TaskSpec t = small_task(TaskKind::kMaxDist);
  const Dataset a = cached_task(t, 8, DatasetRole::kTraining, dir.string());
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    ++files;
    // A damaged cache file is regenerated.
    write_file_atomic(e.path().string(), "DLDSjunk");
  }
  EXPECT_EQ(files, 1u);
  const Dataset b = cached_task(t, 8, DatasetRole::kTraining, dir.string());
  const Dataset c = cached_task(t, 8, DatasetRole::kTraining, dir.string());
  EXPECT_EQ(serialize_dataset(t, a, DatasetRole::kTraining),
            serialize_dataset(t, b, DatasetRole::kTraining));
  EXPECT_EQ(serialize_dataset(t, a, DatasetRole::kTraining),
            serialize_dataset(t, c, DatasetRole::kTraining));
  std::filesystem::remove_all(dir);
}

TEST(AdamW, QuadraticBowlConverges) {
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.weight_decay = 0.0;
  const std::vector<double> c{1.0, 10.0, 0.1, 3.0}, target{1.0, -2.0, 0.5, 3.0};
  std::vector<double> p(4, 0.0), g(4);
  AdamW opt(4, cfg);
  for (int step = 0; step < 10000; ++step) {
    for (std::size_t k = 0; k < 4; ++k) g[k] = c[k] * (p[k] - target[k]);
    opt.step(p, g);
  }
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(p[k], target[k], 1e-6);
}

TEST(AdamW, DecoupledDecayAndBiasCorrection) {
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.1;
  std::vector<double> p{2.0, -1.0};
  AdamW opt(2, cfg);
  opt.step(p, {0.0, 0.5});
  EXPECT_DOUBLE_EQ(p[0], 2.0 * (1 - 0.001));
  // First bias-corrected step has magnitude lr * g / (|g| + eps).
  EXPECT_NEAR(p[1], -1.0 * (1 - 0.001) - 0.01 * 0.5 / (0.5 + 1e-8), 1e-15);
}

TEST(Train, ConstantTargetIsFitted) {
  const Dataset d = constant_dataset(0.7);
  Predictor p(tiny(Family::kNormDeepSet), false);
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.epochs = 400;
  cfg.batch_size = 10;
  const TrainResult r = train(p, d, cfg, 3);
  EXPECT_LE(evaluate(p, r.params, d, d.train), 1e-6);
}

TEST(Train, BestValidationIsReturned) {
  const Dataset d = constant_dataset(-0.3);
  Predictor p(tiny(Family::kPointNet), false);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.patience = 3;
  const TrainResult r = train(p, d, cfg, 5);
  ASSERT_EQ(r.best_val.size(), 30u);
  for (std::size_t e = 1; e < r.best_val.size(); ++e) EXPECT_LE(r.best_val[e], r.best_val[e - 1]);
  const double best = *std::min_element(r.val_loss.begin(), r.val_loss.end());
  EXPECT_EQ(r.best_val.back(), best);
  EXPECT_EQ(r.val_loss[r.best_epoch], best);
  EXPECT_DOUBLE_EQ(evaluate(p, r.params, d, d.val), best);
  const TrainResult again = train(p, d, cfg, 5);
  EXPECT_EQ(again.params.values(), r.params.values());
}

TEST(Train, NonFiniteLossRaisesTrainDiverged) {
  Dataset d = constant_dataset(1.0);
  d.samples[d.train[3]].target[0] = std::nan("");
  Predictor p(tiny(Family::kDeepSet), false);
  TrainConfig cfg;
  cfg.epochs = 3;
  try {
    train(p, d, cfg, 1);
    FAIL();
  } catch (const TrainDiverged& e) {
    EXPECT_EQ(e.epoch(), 0u);
    EXPECT_EQ(e.code(), ErrorCode::kTrainDiverged);
  }
}

TEST(Train, BestOfInitializations) {
  const Dataset d = constant_dataset(0.2);
  Predictor p(tiny(Family::kNormDeepSet), false);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.init_candidates = 5;
  const TrainResult r = train(p, d, cfg, 9);
  EXPECT_EQ(r.inits_tried, 5u);
}

TEST(Train, GwHeadGradientMatchesFiniteDifference) {
  TaskSpec t = small_task(TaskKind::kGwTlbPairs);
  t.n_train = 5;
  t.n_test = {5};
  const Dataset d = gen_task(t, 5, DatasetRole::kTraining);
  ModelSpec ms;
  ms.family = Family::kSvdDs;
  ms.in_dim = 3;
  ms.out_dim = 10;
  ms.widths = {4};
  ms.head = {4};
  ms.act = Activation::kTanh;
  Predictor p(ms, true, 10);
  ParamStore ps = p.init(2);
  const Sample& s = d.samples[d.train[0]];
  ad::Tape tape(&ps);
  const ad::Var loss = p.loss(tape, d, s, nullptr);
  tape.backward(loss);
  const auto grad = tape.param_grads();
  auto value = [&](ParamStore& q) {
    ad::Tape t2(&q);
    return t2.value(p.loss(t2, d, s, nullptr))[0];
  };
  for (const char* name : {"gw.W", "gw.a", "gw.b", "rho.W0"}) {
    const std::size_t off = ps.entry(ps.index(name)).offset;
    ParamStore q = ps;
    const double h = 1e-6, v0 = q.values()[off];
    q.values()[off] = v0 + h;
    const double up = value(q);
    q.values()[off] = v0 - h;
    const double dn = value(q);
    const double fd = (up - dn) / (2 * h);
    EXPECT_NEAR(grad[off], fd, 1e-5 * std::max(1.0, std::abs(fd))) << name;
  }
  EXPECT_DOUBLE_EQ(p.predict(ps, d, s)[0] - s.target[0],
                   std::sqrt(evaluate(p, ps, d, {d.train[0]})) *
                       (p.predict(ps, d, s)[0] > s.target[0] ? 1 : -1));
}

TEST(Train, MaxDistPointNetBeatsTargetVariance) {
  TaskSpec t;
  t.task = TaskKind::kMaxDist;
  t.n_train = 20;
  t.n_test = {20};
  t.samples = 5000;
  t.seed = 3;
  const Dataset d = gen_task(t, 20, DatasetRole::kTraining);
  ModelSpec ms;
  ms.family = Family::kPointNet;
  ms.in_dim = 2;
  Predictor p(ms, false);
  TrainConfig cfg;
  cfg.epochs = 4;
  const TrainResult r = train(p, d, cfg, 1);
  double mean = 0.0, var = 0.0;
  for (std::size_t k : d.test) mean += d.samples[k].target[0] / d.test.size();
  for (std::size_t k : d.test)
    var += std::pow(d.samples[k].target[0] - mean, 2) / d.test.size();
  EXPECT_LT(evaluate(p, r.params, d, d.test), 0.1 * var);
}

TEST(Train, CggnnTriangleLossDrops) {
  // Small N keeps the 400 epochs affordable; the property is about the
  // training loss, so N only sets the cost.
  TaskSpec t;
  t.task = TaskKind::kTriangleDensity;
  t.n_train = 50;
  t.n_test = {50};
  t.samples = 200;
  t.seed = 4;
  const Dataset d = gen_task(t, 50, DatasetRole::kTraining);
  ModelSpec ms;
  ms.family = Family::kCggnn;
  ms.widths = {16, 16};
  Predictor p(ms, false);
  TrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.batch_size = 16;
  cfg.epochs = 400;
  const TrainResult r = train(p, d, cfg, 1);
  EXPECT_LE(*std::min_element(r.train_loss.begin(), r.train_loss.end()), r.initial_loss / 100);
}

TEST(Sizegen, ShapeAndDeterminism) {
  TaskSpec t = small_task(TaskKind::kMaxDist);
  ModelSpec ms = tiny(Family::kPointNet);
  TrainConfig cfg;
  cfg.epochs = 2;
  const auto a = run_sizegen(t, ms, cfg, 3);
  const auto b = run_sizegen(t, ms, cfg, 3);
  ASSERT_EQ(a.rows.size(), 6u);
  ASSERT_EQ(a.median_ratio.size(), 2u);
  EXPECT_DOUBLE_EQ(a.median_ratio[0], 1.0);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].mse, b.rows[i].mse);
    EXPECT_EQ(a.rows[i].run, i / 2);
  }
  ms.family = Family::kCggnn;
  EXPECT_THROW(run_sizegen(t, ms, cfg, 1), Error);
}

TEST(Sizegen, TrainingDoesNotChangeData) {
  const TaskSpec t = small_task(TaskKind::kMaxDist);
  const auto before = serialize_dataset(t, gen_task(t, 8, DatasetRole::kTraining),
                                        DatasetRole::kTraining);
  TrainConfig cfg;
  cfg.epochs = 2;
  run_sizegen(t, tiny(Family::kDeepSet), cfg, 1);
  EXPECT_EQ(serialize_dataset(t, gen_task(t, 8, DatasetRole::kTraining), DatasetRole::kTraining),
            before);
}

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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dimlift/models.hpp"

namespace dimlift {

enum class TaskKind { kPopStats, kMaxDist, kTriangleDensity, kGwTlbPairs };
enum class PopStat { kRotation, kCorrelation, kRank1, kRandom };
enum class TriangleGen { kDenseUniform, kSbm };

std::string to_string(TaskKind k);
TaskKind parse_task(const std::string& s);
std::string to_string(PopStat p);
PopStat parse_popstat(const std::string& s);
std::string to_string(TriangleGen g);
TriangleGen parse_triangle_gen(const std::string& s);

struct TaskSpec {
  TaskKind task = TaskKind::kMaxDist;
  PopStat pop = PopStat::kRank1;
  TriangleGen gen = TriangleGen::kDenseUniform;
  std::size_t samples = 5000;       // N of the training dataset
  std::size_t test_samples = 1000;  // N of each evaluation dataset
  std::size_t n_train = 20;
  std::vector<std::size_t> n_test{20, 200};
  std::uint64_t seed = 0;
  double gw_p = 2.0;  // exponent of the TLB target

  void validate() const;
  /// Input feature dimension the task produces.
  std::size_t input_dim() const;
  /// Canonical JSON text (used in cache headers and reports).
  std::string to_json() const;
};

/// One supervised example. Pair tasks reference two objects; other tasks
/// leave `second` empty.
struct Sample {
  std::size_t first = 0;
  std::optional<std::size_t> second;
  Matrix target;
};

struct Dataset {
  std::size_t n = 0;
  std::vector<SizedObject> objects;
  std::vector<Sample> samples;
  std::vector<std::size_t> train, val, test;  // partition of sample indices
};

enum class DatasetRole { kTraining, kEvaluation };

/// Builds the dataset at size n. Training datasets are split per task
/// (50/25/25 population statistics, 80/10/10 max distance, 60/20/20 graphs,
/// disjoint shape halves for GW pairs); evaluation datasets are all test.
Dataset gen_task(const TaskSpec& spec, std::size_t n, DatasetRole role);

/// Signal-weighted triangle density y_i = x_i (A D A D A)_ii / n^2, D = diag(x).
Matrix triangle_density(const Matrix& a, const Matrix& x);
/// Mutual information between the first k coordinates and the rest of a
/// centered Gaussian with covariance sigma.
double gaussian_mi(const Matrix& sigma, std::size_t k);

std::string serialize_dataset(const TaskSpec& spec, const Dataset& d, DatasetRole role);
/// Rejects files whose header does not match (spec, n, role).
Dataset deserialize_dataset(const std::string& bytes, const TaskSpec& spec, std::size_t n,
                            DatasetRole role);
/// Loads the cached dataset from `dir`, regenerating and writing it when the
/// file is missing or stale. An empty `dir` disables caching.
Dataset cached_task(const TaskSpec& spec, std::size_t n, DatasetRole role, const std::string& dir);

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 0.1;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::size_t patience = 50;  // epochs without validation gain before halving lr
  std::size_t init_candidates = 1;  // keep the best of k initializations

  void validate() const;
};

/// Decoupled weight decay Adam.
class AdamW {
 public:
  AdamW(std::size_t size, const TrainConfig& cfg);
  void step(std::vector<double>& params, const std::vector<double>& grad);
  double lr() const noexcept { return lr_; }
  void set_lr(double lr) noexcept { lr_ = lr; }

 private:
  double lr_;
  TrainConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

/// Model plus the optional GW regression head a |W (f(V) - f(V'))|^2 + b.
class Predictor {
 public:
  Predictor(ModelSpec spec, bool pair_head, std::size_t head_dim = 10);
  const Model& model() const noexcept { return model_; }
  bool pair_head() const noexcept { return pair_; }

  ParamStore init(std::uint64_t seed) const;
  /// Per-sample squared error of the prediction (mean over output entries).
  ad::Var loss(ad::Tape& t, const Dataset& d, const Sample& s, bool* degenerate) const;
  Matrix predict(const ParamStore& ps, const Dataset& d, const Sample& s) const;

 private:
  ad::Var output(ad::Tape& t, const Dataset& d, const Sample& s, bool* degenerate) const;
  Model model_;
  bool pair_;
  std::size_t head_dim_;
};

struct TrainResult {
  ParamStore params;  // best-validation parameters
  double initial_loss = 0.0;  // training-split loss before the first step
  std::vector<double> train_loss, val_loss, best_val;
  std::size_t best_epoch = 0;
  std::size_t inits_tried = 1;
};

/// Mean loss over the given sample indices, skipping degenerate samples.
double evaluate(const Predictor& p, const ParamStore& ps, const Dataset& d,
                const std::vector<std::size_t>& idx);

/// Minibatch AdamW on MSE. Throws TrainDiverged on a non-finite loss.
TrainResult train(const Predictor& p, const Dataset& d, const TrainConfig& cfg, std::uint64_t seed);

struct SizegenRow {
  std::size_t n = 0;
  std::size_t run = 0;
  double mse = 0.0;
};

/// Test MSE of a trained model on fresh evaluation datasets, one per size.
std::vector<SizegenRow> evaluate_sizes(const Predictor& p, const ParamStore& ps,
                                       const TaskSpec& spec, std::size_t run,
                                       const std::string& cache_dir = {});

struct SizegenResult {
  std::vector<SizegenRow> rows;
  std::vector<TrainResult> runs;
  /// Median over runs of MSE(n) / MSE(n_train), per test size.
  std::vector<double> median_ratio;
};

/// Trains `runs` seeded initializations on one training dataset and
/// evaluates each on every test size.
SizegenResult run_sizegen(const TaskSpec& task, const ModelSpec& model, const TrainConfig& cfg,
                          std::size_t runs, const std::string& cache_dir = {});

}  // namespace dimlift

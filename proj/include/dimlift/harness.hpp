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
#include <functional>
#include <string>
#include <vector>

#include "dimlift/consistent.hpp"
#include "dimlift/models.hpp"

namespace dimlift {

/// Real function on [0, 1] with exact interval means.
struct SignalFn {
  enum class Kind { kConstant, kLinear, kSine };
  Kind kind = Kind::kLinear;
  double a = 0.0;  // constant value, intercept, or sine amplitude
  double b = 1.0;  // slope, or sine frequency (cycles per unit)
  double operator()(double t) const;
  /// Mean of the function over [t0, t1].
  double mean(double t0, double t1) const;
};

/// Graphon W: [0,1]^2 -> [0,1].
struct Graphon {
  enum class Kind { kConstant, kSbm, kTable };
  Kind kind = Kind::kConstant;
  double c = 0.5;
  Matrix p;                   // K x K block values (kSbm, kTable)
  std::vector<double> gamma;  // block proportions (kSbm); equal blocks for kTable
  double operator()(double x, double y) const;
  /// Mean of W over [x0,x1] x [y0,y1].
  double cell_mean(double x0, double x1, double y0, double y1) const;
  void validate() const;
};

struct Limit {
  enum class Kind { kScalarGaussian, kScalarUniform, kGaussianVec, kFunction, kGraphon, kCloud };
  Kind kind = Kind::kScalarGaussian;
  double a = 0.0, b = 1.0;  // gaussian (mean, sd) or uniform (lo, hi)
  Matrix chol;              // kGaussianVec: rows are L z with z ~ N(0, I)
  SignalFn f;               // kFunction, and the node signal of kGraphon
  Graphon w;                // kGraphon
  Matrix means;             // kCloud: component means, one per row
  std::vector<double> weights;
  double sd = 1.0;
};

enum class Scheme { kIidEmpirical, kGraphonBernoulli, kUniformGrid, kLocalAverage };

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& s);

struct SamplerSpec {
  Limit limit;
  Scheme scheme = Scheme::kIidEmpirical;
  std::uint64_t seed = 0;

  void validate() const;
  /// Deterministic in (seed, n, trial).
  SizedObject sample(std::size_t n, std::size_t trial = 0) const;
};

/// Inverse standard normal CDF.
double normal_quantile(double p);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;           // root mean squared residual in log space
  std::vector<std::size_t> dropped;  // indices with nonpositive medians
};
/// Least squares on (log n, log median). Nonpositive medians are dropped and
/// reported; fewer than 4 remaining points raise FitError.
RateFit fit_rate(const std::vector<double>& sizes, const std::vector<double>& medians);

struct RateReport {
  std::vector<std::size_t> sizes;
  std::vector<double> median, lo, hi;  // median and central 80% band
  RateFit fit;
  bool fitted = false;
  std::string fit_error;
};

/// Median and 10% / 90% quantiles (linear interpolation).
void summarize(std::vector<double> v, double& median, double& lo, double& hi);

struct TransferSpec {
  std::vector<std::size_t> sizes;
  std::size_t trials = 100;
  enum class Reference { kLargestMedian, kGiven };
  Reference reference = Reference::kLargestMedian;
  Matrix given;  // 1 x out_dim reference row for kGiven
  bool fit = true;
};

struct TransferRecord {
  std::size_t size = 0;
  std::size_t trial = 0;
  double value = 0.0;     // first output entry, or normalized l2 of node outputs
  double distance = 0.0;  // to the reference
};

struct TransferResult {
  std::vector<TransferRecord> records;
  RateReport rate;
  Matrix reference;
  std::vector<double> median_abs_value;
  /// Median |value| nondecreasing in n and growing at least 10x overall.
  bool diverged = false;
};

/// Evaluates one fixed model on `trials` samples at each size. Invariant
/// outputs are compared entrywise to the reference row; node outputs are
/// compared to the constant signal 1 r^T in the normalized l2 norm.
TransferResult run_transfer(const Model& model, const ParamStore& ps, const SamplerSpec& sampler,
                            const TransferSpec& spec);

/// sigma(E rho(x)) for a mean-aggregating set model, with the expectation
/// taken over the quadrature nodes produced by `node(i)` for i < count.
Matrix mean_aggregate_limit(const Model& model, const ParamStore& ps, std::size_t count,
                            const std::function<double(std::size_t)>& node);
/// Limit of a normalized DeepSet on a scalar limit: quantile nodes for
/// distributions, midpoint nodes for functions on [0, 1].
Matrix set_limit_value(const Model& model, const ParamStore& ps, const Limit& limit,
                       std::size_t nodes = 1000000);

/// W1 between two empirical measures on the line (CDF formula, any sizes).
double w1_empirical(std::vector<double> x, std::vector<double> y);

}  // namespace dimlift

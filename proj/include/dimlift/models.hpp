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
#include <string>
#include <vector>

#include "dimlift/autodiff.hpp"
#include "dimlift/consistent.hpp"
#include "dimlift/params.hpp"

namespace dimlift {

using ad::Activation;

enum class Family {
  kDeepSet,
  kNormDeepSet,
  kPointNet,
  kMpnn,
  kIgn2Norm,
  kGgnn,
  kCggnn,
  kDsci,
  kSvdDs,
};

enum class Aggregation { kSum, kMean, kMax, kNormalizedSum };
enum class DsciVariant { kNormalized, kCompatible };

/// Architecture description. `widths` are the hidden widths of the main
/// stack: rho for set models, per-layer channels for graph models and the
/// rho widths of every DeepSet inside DS-CI. `head` are the hidden widths of
/// sigma (set models, SVD-DS) or the DS-CI combiner. Graph models have
/// widths.size() + 1 layers.
struct ModelSpec {
  Family family = Family::kNormDeepSet;
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  std::vector<std::size_t> widths{50, 50};
  std::vector<std::size_t> head{50};
  std::size_t message_degree = 2;  // S, GGNN and CGGNN
  Activation act = Activation::kRelu;
  Aggregation agg = Aggregation::kNormalizedSum;  // MPNN; SVD-DS takes kSum unnormalized
  DsciVariant variant = DsciVariant::kCompatible;
  bool rho_bias = true;  // false gives rho(0) = 0 for set models

  void validate() const;
  std::size_t depth() const { return widths.size() + 1; }
};

std::string to_string(Family f);
Family parse_family(const std::string& s);
std::string to_string(Aggregation a);
Aggregation parse_aggregation(const std::string& s);
std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

/// Object kind the family consumes.
ObjectKind input_kind(Family f);
/// True when the model maps each object to one 1 x out_dim row.
bool is_invariant(Family f);

struct ModelOutput {
  ad::Var x;  // 1 x out_dim for invariant models, n x out_dim otherwise
  ad::Var a;  // n x n graph output of GGNN, CGGNN and 2-IGN, else invalid
};

/// Fully connected stack with widths chain[0] -> ... -> chain.back().
/// Hidden layers use `act`; the last layer is affine unless `act_last`.
void add_mlp(ParamStore& ps, const std::string& prefix, const std::vector<std::size_t>& chain,
             bool bias, RngStream& rng);
ad::Var mlp(ad::Tape& t, ad::Var x, const std::string& prefix, std::size_t layers, Activation act,
            bool act_last, bool bias);
/// Row-wise MLP evaluation outside a tape.
Matrix mlp_forward(const ParamStore& ps, const std::string& prefix, std::size_t layers,
                   const Matrix& x, Activation act, bool act_last, bool bias);

class Model {
 public:
  explicit Model(ModelSpec spec);
  const ModelSpec& spec() const noexcept { return spec_; }

  /// Fresh parameters, uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  ParamStore init(std::uint64_t seed) const;
  /// `degenerate` is set when an SVD input has near-repeated singular values
  /// and the input gradient is unavailable.
  ModelOutput forward(ad::Tape& t, const SizedObject& x, bool* degenerate = nullptr) const;
  /// Same as forward, with the object's data entering the tape as given
  /// (lets tests differentiate with respect to inputs).
  ModelOutput forward_vars(ad::Tape& t, ObjectKind kind, ad::Var a, ad::Var x,
                           bool* degenerate = nullptr) const;

  Matrix predict(const ParamStore& ps, const SizedObject& x) const;
  /// Output as an object of the output sequence: graphs for GGNN, CGGNN and
  /// 2-IGN, node features as a set for MPNN, a 1-row set for invariant models.
  SizedObject predict_object(const ParamStore& ps, const SizedObject& x) const;

 private:
  ad::Var set_forward(ad::Tape& t, ad::Var x) const;
  ad::Var mpnn_forward(ad::Tape& t, ad::Var a, ad::Var x) const;
  ModelOutput ign_forward(ad::Tape& t, ad::Var a, ad::Var x) const;
  ModelOutput ggnn_forward(ad::Tape& t, ad::Var a, ad::Var x) const;
  ad::Var dsci_forward(ad::Tape& t, ad::Var v) const;
  ad::Var deepset_block(ad::Tape& t, ad::Var rows, const std::string& prefix) const;

  ModelSpec spec_;
};

/// Wraps a model for the compatibility checker, choosing the output
/// sequence and norm that match the family.
CompatModel compat_model(const Model& model, const ParamStore& ps);

/// Batch loss and gradient. Per-sample gradients are summed in index order,
/// so the result does not depend on the worker count.
struct GradResult {
  double loss = 0.0;              // mean per-sample MSE
  std::vector<double> grad;       // d loss / d params
  std::size_t skipped = 0;        // samples with degenerate SVD (excluded)
};
GradResult loss_and_grad(const Model& model, const ParamStore& ps,
                         const std::vector<SizedObject>& inputs,
                         const std::vector<Matrix>& targets,
                         const std::vector<std::size_t>& batch);

/// One GGNN or CGGNN linear layer without biases, returning A' and the
/// S + 1 signal slots side by side (n x (S+1) d').
struct GgnnLinearOut {
  Matrix a;
  Matrix x;
};
GgnnLinearOut ggnn_linear(const Model& model, const ParamStore& ps, std::size_t layer,
                          const Matrix& a, const Matrix& x);
/// Upper bound on the operator norm of that layer in the infinity norm
/// max(max |A_ij|, max_i |X_i|_inf), taken over the max of all output slots.
double ggnn_linear_bound(const Model& model, const ParamStore& ps, std::size_t layer);

}  // namespace dimlift

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
#include <optional>
#include <string>
#include <vector>

#include "dimlift/matrix.hpp"
#include "dimlift/rng.hpp"

namespace dimlift {

enum class ObjectKind { kSet, kGraph, kCloud };

/// A set (n x d rows), a graph signal (n x n adjacency plus n x d features)
/// or a point cloud (n x k). Feature channels live side by side in `x`.
struct SizedObject {
  ObjectKind kind = ObjectKind::kSet;
  Matrix a;  // adjacency, graphs only
  Matrix x;

  static SizedObject set(Matrix x);
  static SizedObject graph(Matrix a, Matrix x);
  static SizedObject cloud(Matrix x);

  std::size_t n() const noexcept { return kind == ObjectKind::kGraph ? a.rows() : x.rows(); }
  void validate() const;
};

enum class SequenceKind { kZeroPadSet, kDupSet, kDupGraph, kDupPointCloud };

struct NormKind {
  enum class Tag { kLp, kNormalizedLp, kGraphP, kGraphOpP, kCut };
  Tag tag = Tag::kNormalizedLp;
  double p = 2.0;  // infinity allowed

  static NormKind lp(double p) { return {Tag::kLp, p}; }
  static NormKind normalized_lp(double p) { return {Tag::kNormalizedLp, p}; }
  static NormKind graph_p(double p) { return {Tag::kGraphP, p}; }
  static NormKind graph_op(double p) { return {Tag::kGraphOpP, p}; }
  static NormKind cut() { return {Tag::kCut, 1.0}; }
};

/// Permutation of [n] (output row i is input row perm[i]) and an optional
/// orthogonal k x k matrix acting on point clouds from the right as X h^T.
struct GroupElement {
  std::vector<std::size_t> perm;
  std::optional<Matrix> orth;

  static GroupElement identity(std::size_t n);
  static GroupElement random(std::size_t n, std::optional<std::size_t> k, RngStream& rng);
};

std::string to_string(SequenceKind s);
std::string to_string(NormKind k);

bool admissible(SequenceKind seq, NormKind norm);
bool admissible(SequenceKind seq, ObjectKind kind);

SizedObject embed(const SizedObject& x, SequenceKind seq, std::size_t target);
SizedObject act(const GroupElement& g, const SizedObject& x);
/// Block embedding of g into S_{nm}: acts on each duplicated block as a whole.
GroupElement embed_group(const GroupElement& g, std::size_t m);
double norm(const SizedObject& x, NormKind k);

Matrix random_orthogonal(std::size_t k, RngStream& rng);

/// A sequence of maps f_n under test. out_seq empty means the output lives in
/// the trivial sequence (invariant outputs, compared directly).
struct CompatModel {
  std::function<SizedObject(const SizedObject&)> f;
  std::optional<SequenceKind> out_seq;
  NormKind out_norm = NormKind::normalized_lp(2.0);
  std::string name;
};

struct Deviation {
  std::size_t size = 0;  // target N, or n for equivariance checks
  std::size_t trial = 0;
  double value = 0.0;     // relative: |f(phi x) - psi f(x)| / (1 + |f(x)|)
};

struct CheckReport {
  std::vector<Deviation> deviations;
  double max_deviation = 0.0;
  double tolerance = 1e-7;
  bool pass = true;
};

inline constexpr double kCompatTolerance = 1e-7;

/// Deviation of f_N(embed(x, N)) from embed(f_n(x), N) for each N = m n.
CheckReport check_compatibility(const CompatModel& model,
                                const std::function<SizedObject(RngStream&)>& sampler,
                                SequenceKind seq, const std::vector<std::size_t>& multiples,
                                std::size_t trials, std::uint64_t seed,
                                double tolerance = kCompatTolerance);
CheckReport check_compatibility(const CompatModel& model, const SizedObject& x, SequenceKind seq,
                                const std::vector<std::size_t>& multiples,
                                double tolerance = kCompatTolerance);

/// Deviation of f(g x) from g f(x) over random group elements.
CheckReport check_equivariance(const CompatModel& model, const SizedObject& x, std::size_t trials,
                               std::uint64_t seed, double tolerance = kCompatTolerance);

}  // namespace dimlift

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
#include <utility>
#include <vector>

#include "dimlift/consistent.hpp"
#include "dimlift/error.hpp"
#include "dimlift/experiments.hpp"
#include "dimlift/harness.hpp"
#include "dimlift/models.hpp"

namespace dimlift {

/// Result of one command: a report, optional CSV and extra files, all kept in
/// memory until write_outputs() puts them on disk.
struct RunOutput {
  int exit_code = 0;
  std::string json;
  std::string csv;
  std::string text;  // stdout payload (metric)
  std::vector<std::pair<std::string, std::string>> files;  // relative path, bytes
};

/// Writes every file atomically under `dir`, creating directories as needed.
void write_outputs(const RunOutput& out, const std::string& dir);

/// Command runners. `seed` overrides the config's top-level seed. Configs are
/// validated completely before any computation; unknown keys are rejected
/// with their JSON path.
RunOutput run_compat(const std::string& config_json, std::optional<std::uint64_t> seed);
RunOutput run_transfer(const std::string& config_json, std::optional<std::uint64_t> seed);
/// `out_dir` supplies the default dataset cache location (out_dir/cache).
RunOutput run_sizegen(const std::string& config_json, std::optional<std::uint64_t> seed,
                      const std::string& out_dir);
/// Metric between two matrix text documents. `b` may be empty for "cut",
/// which then reports the cut bounds of `a` itself.
RunOutput run_metric(const std::string& kind, const std::string& a, const std::string& b,
                     double p);

/// Minimal compat config for a (family, sequence) pair.
std::string compat_config_for(const std::string& family, const std::string& sequence);

SequenceKind parse_sequence(const std::string& s);

/// Small default architecture used when a config names only the family.
ModelSpec default_spec(Family f);

/// The documented compatible (model, sequence) pairs.
struct CompatPair {
  Family family;
  SequenceKind seq;
  bool rho_bias;
};
const std::vector<CompatPair>& compatible_pairs();

/// A documented incompatible pair with the fixed model and input exposing it.
struct Witness {
  std::string name;
  ModelSpec spec;
  ParamStore params;
  SequenceKind seq;
  SizedObject x;
  std::size_t multiple;
};
std::vector<Witness> incompatibility_witnesses();

/// Maps an exception to the process exit code of the command line tool.
int exit_code_for(ErrorCode code);

}  // namespace dimlift

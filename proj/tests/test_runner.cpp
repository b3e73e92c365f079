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

#include <filesystem>

#include "json.hpp"

#include "dimlift/dimlift.h"
#include "dimlift/error.hpp"
#include "dimlift/io.hpp"
#include "dimlift/runner.hpp"

using namespace dimlift;
using Json = nlohmann::json;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kCheckFailed;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

const char* kGgnnConstant = R"({
  "seed": 2,
  "model": {"family": "ggnn", "in_dim": 1, "out_dim": 1, "widths": [8]},
  "sampler": {"limit": {"kind": "graphon", "graphon": {"kind": "constant", "value": 0.5},
                        "signal": {"kind": "constant", "value": 1}},
              "scheme": "uniform-grid"},
  "sizes": [8, 16, 32, 64], "trials": 1, "fit": false})";

}  // namespace

TEST(Runner, CompatNormDeepSetPasses) {
  const RunOutput out = run_compat(compat_config_for("norm-deepset", "dup-set"), std::nullopt);
  EXPECT_EQ(out.exit_code, 0);
  const Json j = Json::parse(out.json);
  EXPECT_TRUE(j["pass"].get<bool>());
  EXPECT_EQ(j["deviations"].size(), 4u * 3u * 20u);
  EXPECT_FALSE(j.contains("witness"));
}

TEST(Runner, CompatIgnFailsWithWitness) {
  const RunOutput out = run_compat(compat_config_for("ign2-norm", "dup-graph"), std::nullopt);
  EXPECT_EQ(out.exit_code, 1);
  const Json j = Json::parse(out.json);
  EXPECT_FALSE(j["pass"].get<bool>());
  ASSERT_TRUE(j.contains("witness"));
  const std::size_t n = j["witness"]["n"].get<std::size_t>();
  EXPECT_EQ(j["witness"]["a"].size(), n);
  EXPECT_EQ(j["witness"]["x"].size(), n);
}

TEST(Runner, CompatWitnessInputReplays) {
  // The echoed witness fed back as an explicit input reproduces the deviation.
  const RunOutput first = run_compat(compat_config_for("ign2-norm", "dup-graph"), 4);
  const Json j = Json::parse(first.json);
  Json cfg = Json::parse(compat_config_for("ign2-norm", "dup-graph"));
  cfg["seed"] = 4;
  cfg["input"] = {{"a", j["witness"]["a"]}, {"x", j["witness"]["x"]}};
  cfg["multiples"] = {j["witness"]["N"].get<std::size_t>() / j["witness"]["n"].get<std::size_t>()};
  const Json again = Json::parse(run_compat(cfg.dump(), std::nullopt).json);
  EXPECT_NEAR(again["max_deviation"].get<double>(), j["max_deviation"].get<double>(), 1e-12);
}

TEST(Runner, ConfigErrorsNamePaths) {
  EXPECT_EQ(code_of([] { run_compat("{\"model\": ", std::nullopt); }), ErrorCode::kConfigError);
  EXPECT_NE(message_of([] { run_compat("{\"model\": ", std::nullopt); }).find("$"),
            std::string::npos);
  const std::string bad_width = R"({"model": {"family": "mpnn", "widths": [4, -1]}, "sequence": "dup-graph"})";
  EXPECT_NE(message_of([&] { run_compat(bad_width, std::nullopt); }).find("$.model.widths[1]"),
            std::string::npos);
  const std::string unknown = R"({"model": {"family": "mpnn", "colour": 1}, "sequence": "dup-graph"})";
  EXPECT_NE(message_of([&] { run_compat(unknown, std::nullopt); }).find("$.model.colour"),
            std::string::npos);
  const std::string seq = R"({"model": {"family": "mpnn"}, "sequence": "dup-set"})";
  EXPECT_EQ(code_of([&] { run_compat(seq, std::nullopt); }), ErrorCode::kConfigError);
  const std::string fam = R"({"model": {"family": "resnet"}, "sequence": "dup-set"})";
  EXPECT_NE(message_of([&] { run_compat(fam, std::nullopt); }).find("$.model.family"),
            std::string::npos);
  EXPECT_EQ(exit_code_for(ErrorCode::kConfigError), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::kParseError), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::kSizeCapExceeded), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::kFitError), 1);
  EXPECT_EQ(exit_code_for(ErrorCode::kTrainDiverged), 1);
}

TEST(Runner, TransferConstantGraphonGgnn) {
  const RunOutput out = run_transfer(kGgnnConstant, std::nullopt);
  EXPECT_EQ(out.exit_code, 0);
  const CsvTable t = parse_csv(out.csv);
  ASSERT_EQ(t.columns, (std::vector<std::string>{"size", "trial", "value", "distance"}));
  ASSERT_EQ(t.rows.size(), 4u);
  for (const auto& r : t.rows) EXPECT_LE(std::stod(r[3]), 1e-9);
  EXPECT_EQ(out.csv.rfind(kCsvHeader, 0), 0u);
}

TEST(Runner, TransferDeterministicAndSeedOverride) {
  const RunOutput a = run_transfer(kGgnnConstant, std::nullopt);
  const RunOutput b = run_transfer(kGgnnConstant, std::nullopt);
  EXPECT_EQ(a.csv, b.csv);
  EXPECT_EQ(a.json, b.json);
  const RunOutput c = run_transfer(kGgnnConstant, 2);
  EXPECT_EQ(a.json, c.json);
  const RunOutput d = run_transfer(kGgnnConstant, 3);
  EXPECT_NE(a.json, d.json);
}

TEST(Runner, TransferFitErrorExitsOne) {
  Json cfg = Json::parse(kGgnnConstant);
  cfg["fit"] = true;
  // Distances to the limit vanish, so no point survives the log fit.
  const RunOutput out = run_transfer(cfg.dump(), std::nullopt);
  EXPECT_EQ(out.exit_code, 1);
  EXPECT_TRUE(Json::parse(out.json).contains("fit_error"));
}

TEST(Runner, TransferDeepSetDiverges) {
  const std::string cfg = R"({"seed": 1,
    "model": {"family": "deepset", "in_dim": 1},
    "sampler": {"limit": {"kind": "gaussian"}},
    "sizes": [16, 64, 256, 1024], "trials": 10, "fit": false})";
  const Json j = Json::parse(run_transfer(cfg, std::nullopt).json);
  EXPECT_TRUE(j["diverged"].get<bool>());
}

TEST(Runner, TransferLimitReferenceNeedsScalarNormDeepSet) {
  const std::string cfg = R"({"model": {"family": "pointnet", "in_dim": 1},
    "sampler": {"limit": {"kind": "gaussian"}}, "reference": "limit"})";
  EXPECT_EQ(code_of([&] { run_transfer(cfg, std::nullopt); }), ErrorCode::kConfigError);
}

TEST(Runner, SizegenShapeAndRatio) {
  const std::string cfg = R"({"seed": 3,
    "task": {"kind": "maxdist", "samples": 40, "test_samples": 8, "n_train": 5, "n_test": [5, 10]},
    "model": {"family": "pointnet", "widths": [4], "head": [4]},
    "train": {"epochs": 2, "batch_size": 8},
    "runs": 3, "cache_dir": null})";
  const RunOutput out = run_sizegen(cfg, std::nullopt, "");
  const CsvTable t = parse_csv(out.csv);
  ASSERT_EQ(t.columns,
            (std::vector<std::string>{"task", "model", "n", "run", "mse", "ratio"}));
  ASSERT_EQ(t.rows.size(), 3u * 2u);
  for (const auto& r : t.rows) {
    EXPECT_EQ(r[0], "maxdist");
    EXPECT_EQ(r[1], "pointnet");
    if (r[2] == "5") EXPECT_EQ(r[5], "1");
    EXPECT_NEAR(std::stod(r[5]), std::stod(r[4]) / std::stod(t.rows[std::stoul(r[3]) * 2][4]), 1e-12);
  }
  std::size_t params = 0;
  for (const auto& f : out.files) params += f.first.rfind("params/run", 0) == 0;
  EXPECT_EQ(params, 6u);
  EXPECT_EQ(run_sizegen(cfg, std::nullopt, "").csv, out.csv);
}

TEST(Runner, SizegenCachedReplayIsByteIdentical) {
  const auto dir = std::filesystem::temp_directory_path() / "dimlift_runner_cache";
  std::filesystem::remove_all(dir);
  const std::string cfg = R"({"seed": 5,
    "task": {"kind": "triangle-density", "samples": 20, "test_samples": 4, "n_train": 6, "n_test": [6, 9]},
    "model": {"family": "cggnn", "widths": [3]},
    "train": {"epochs": 1, "batch_size": 5},
    "runs": 2})";
  const RunOutput a = run_sizegen(cfg, std::nullopt, dir.string());
  ASSERT_TRUE(std::filesystem::exists(dir / "cache"));
  const RunOutput b = run_sizegen(cfg, std::nullopt, dir.string());
  EXPECT_EQ(a.csv, b.csv);
  EXPECT_EQ(a.json, b.json);
  write_outputs(a, dir.string());
  EXPECT_EQ(read_file((dir / "sizegen.csv").string()), a.csv);
  EXPECT_TRUE(std::filesystem::exists(dir / "params" / "run1.dlps"));
  std::filesystem::remove_all(dir);
}

TEST(Runner, MetricExamples) {
  EXPECT_EQ(run_metric("cut", "2 2\n1 1\n1 1\n", "", 2.0).text, "1 1 1\n");
  EXPECT_EQ(run_metric("w1d", "2 1\n0\n1\n", "2 1\n1\n2\n", 1.0).text, "1\n");
  const std::string m = "3 2\n0 1\n2 0.5\n-1 3\n";
  for (const char* k : {"w1d", "wasserstein", "hausdorff", "gw-tlb"})
    EXPECT_EQ(run_metric(k, m, m, 2.0).text, "0\n") << k;
  const std::string sq = "2 2\n0.5 -1\n1 0\n";
  EXPECT_EQ(run_metric("cut", sq, sq, 2.0).text, "0 0 0\n");
  EXPECT_EQ(code_of([] { run_metric("w1d", "2 x\n", "1 1\n0\n", 1.0); }), ErrorCode::kParseError);
  EXPECT_EQ(code_of([] { run_metric("nope", "1 1\n0\n", "1 1\n0\n", 1.0); }),
            ErrorCode::kConfigError);
}

TEST(CApi, RoundTripAndErrors) {
  dl_result* r = nullptr;
  const char* cfg = dl_compat_config("pointnet", "dup-set");
  ASSERT_NE(cfg, nullptr);
  const std::string cfg_copy = cfg;
  ASSERT_EQ(dl_run_compat(cfg_copy.c_str(), 1, 9, &r), DL_OK);
  EXPECT_EQ(dl_result_exit_code(r), 0);
  EXPECT_TRUE(Json::parse(dl_result_json(r))["pass"].get<bool>());
  ASSERT_EQ(dl_result_file_count(r), 1u);
  EXPECT_STREQ(dl_result_file_name(r, 0), "compat.json");
  size_t size = 0;
  EXPECT_NE(dl_result_file_data(r, 0, &size), nullptr);
  EXPECT_EQ(size, std::string(dl_result_json(r)).size());
  EXPECT_EQ(dl_result_file_name(r, 1), nullptr);
  dl_result_free(r);

  r = nullptr;
  EXPECT_EQ(dl_run_compat("{", 0, 0, &r), DL_CONFIG_ERROR);
  EXPECT_EQ(r, nullptr);
  EXPECT_NE(std::string(dl_last_error()).find("malformed"), std::string::npos);
  EXPECT_EQ(dl_exit_code(DL_CONFIG_ERROR), 2);
  EXPECT_EQ(dl_exit_code(DL_SIZE_CAP_EXCEEDED), 3);
  EXPECT_EQ(dl_exit_code(DL_OK), 0);
  EXPECT_STREQ(dl_status_name(DL_PARSE_ERROR), "ParseError");
  EXPECT_EQ(dl_run_compat(nullptr, 0, 0, &r), DL_INVALID_INPUT);
  EXPECT_EQ(dl_metric("w1d", "1 1\n0\n", nullptr, 1.0, nullptr), DL_INVALID_INPUT);
  EXPECT_EQ(dl_compat_config("resnet", "dup-set"), nullptr);

  ASSERT_EQ(dl_metric("w1d", "2 1\n0\n1\n", "2 1\n1\n2\n", 1.0, &r), DL_OK);
  EXPECT_STREQ(dl_result_text(r), "1\n");
  dl_result_free(r);
  EXPECT_EQ(dl_metric("w1d", "2 1\n0\nz\n", "1 1\n0\n", 1.0, &r), DL_PARSE_ERROR);
}

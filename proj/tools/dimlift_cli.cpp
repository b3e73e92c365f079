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

// dimlift command line tool. Links only the C interface.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "dimlift/dimlift.h"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

bool read_text(const std::string& path, std::string& text) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot read " << path << "\n";
    return false;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  text = ss.str();
  return true;
}

int report_failure(dl_status s) {
  std::cerr << "error [" << dl_status_name(s) << "]: " << dl_last_error() << "\n";
  return dl_exit_code(s);
}

// Prints the report, writes files, releases the result.
int finish(dl_status s, dl_result* r, const std::string& out_dir) {
  if (s != DL_OK) return report_failure(s);
  const std::string text = dl_result_text(r);
  std::cout << (text.empty() ? dl_result_json(r) : text);
  int code = dl_result_exit_code(r);
  if (!out_dir.empty()) {
    const dl_status w = dl_result_write(r, out_dir.c_str());
    if (w != DL_OK) code = report_failure(w);
  }
  dl_result_free(r);
  return code;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--seed", c.seed, "seed overriding the config");
  cmd->add_option("--out", c.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dimlift: any-dimensional models, compatibility audits and transfer experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", dl_version());

  Common compat, transfer, sizegen;
  std::string family, sequence;
  auto* c = app.add_subcommand("compat", "check compatibility of a model with a consistent sequence");
  add_common(c, compat);
  c->add_option("--model", family, "model family (instead of --config)");
  c->add_option("--seq", sequence, "consistent sequence (with --model)");

  auto* t = app.add_subcommand("transfer", "evaluate a fixed model over growing sizes");
  add_common(t, transfer);
  t->get_option("--config")->required();

  auto* g = app.add_subcommand("sizegen", "train at one size and test at others");
  add_common(g, sizegen);
  g->get_option("--config")->required();

  std::string kind, file_a, file_b;
  double p = 2.0;
  auto* m = app.add_subcommand("metric", "distance between two matrix files");
  m->add_option("kind", kind, "w1d, wasserstein, hausdorff, gw-tlb, sym-cloud or cut")->required();
  m->add_option("a", file_a, "first matrix file")->required();
  m->add_option("b", file_b, "second matrix file");
  m->add_option("--p", p, "exponent");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  dl_result* r = nullptr;
  std::string cfg;
  if (*c) {
    if (!compat.config.empty()) {
      if (!family.empty() || !sequence.empty()) {
        std::cerr << "error: use either --config or --model/--seq\n";
        return 2;
      }
      if (!read_text(compat.config, cfg)) return 2;
    } else {
      if (family.empty() || sequence.empty()) {
        std::cerr << "error: compat needs --config or both --model and --seq\n";
        return 2;
      }
      const char* generated = dl_compat_config(family.c_str(), sequence.c_str());
      if (!generated) return report_failure(DL_CONFIG_ERROR);
      cfg = generated;
    }
    const dl_status s = dl_run_compat(cfg.c_str(), compat.seed.has_value(), compat.seed.value_or(0), &r);
    return finish(s, r, compat.out);
  }
  if (*t) {
    if (!read_text(transfer.config, cfg)) return 2;
    const dl_status s =
        dl_run_transfer(cfg.c_str(), transfer.seed.has_value(), transfer.seed.value_or(0), &r);
    return finish(s, r, transfer.out);
  }
  if (*g) {
    if (!read_text(sizegen.config, cfg)) return 2;
    const dl_status s = dl_run_sizegen(cfg.c_str(), sizegen.seed.has_value(),
                                       sizegen.seed.value_or(0),
                                       sizegen.out.empty() ? nullptr : sizegen.out.c_str(), &r);
    return finish(s, r, sizegen.out);
  }
  std::string a, b;
  if (!read_text(file_a, a)) return 2;
  if (!file_b.empty() && !read_text(file_b, b)) return 2;
  const dl_status s = dl_metric(kind.c_str(), a.c_str(), file_b.empty() ? nullptr : b.c_str(), p, &r);
  return finish(s, r, "");
}

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

#include "dimlift/dimlift.h"

#include <new>
#include <string>

#include "dimlift/error.hpp"
#include "dimlift/runner.hpp"

struct dl_result {
  dimlift::RunOutput out;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_config;

template <typename F>
dl_status guarded(F&& body) {
  try {
    body();
    g_error.clear();
    return DL_OK;
  } catch (const dimlift::Error& e) {
    g_error = e.what();
    return static_cast<dl_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_error = "out of memory";
  } catch (const std::exception& e) {
    g_error = e.what();
  }
  return DL_INTERNAL_ERROR;
}

std::optional<std::uint64_t> seed_of(int has_seed, uint64_t seed) {
  return has_seed ? std::optional<std::uint64_t>(seed) : std::nullopt;
}

dl_status null_arg(const char* what) {
  g_error = std::string(what) + " is null";
  return DL_INVALID_INPUT;
}

template <typename F>
dl_status produce(dl_result** out, F&& run) {
  if (!out) return null_arg("output handle");
  *out = nullptr;
  return guarded([&] { *out = new dl_result{run()}; });
}

}  // namespace

extern "C" {

dl_status dl_run_compat(const char* config_json, int has_seed, uint64_t seed, dl_result** out) {
  if (!config_json) return null_arg("config");
  return produce(out, [&] { return dimlift::run_compat(config_json, seed_of(has_seed, seed)); });
}

dl_status dl_run_transfer(const char* config_json, int has_seed, uint64_t seed, dl_result** out) {
  if (!config_json) return null_arg("config");
  return produce(out, [&] { return dimlift::run_transfer(config_json, seed_of(has_seed, seed)); });
}

dl_status dl_run_sizegen(const char* config_json, int has_seed, uint64_t seed, const char* out_dir,
                         dl_result** out) {
  if (!config_json) return null_arg("config");
  return produce(out, [&] {
    return dimlift::run_sizegen(config_json, seed_of(has_seed, seed), out_dir ? out_dir : "");
  });
}

dl_status dl_metric(const char* kind, const char* a, const char* b, double p, dl_result** out) {
  if (!kind || !a) return null_arg("metric argument");
  return produce(out, [&] { return dimlift::run_metric(kind, a, b ? b : "", p); });
}

int dl_result_exit_code(const dl_result* r) { return r ? r->out.exit_code : 1; }
const char* dl_result_json(const dl_result* r) { return r ? r->out.json.c_str() : ""; }
const char* dl_result_csv(const dl_result* r) { return r ? r->out.csv.c_str() : ""; }
const char* dl_result_text(const dl_result* r) { return r ? r->out.text.c_str() : ""; }
size_t dl_result_file_count(const dl_result* r) { return r ? r->out.files.size() : 0; }

const char* dl_result_file_name(const dl_result* r, size_t i) {
  if (!r || i >= r->out.files.size()) return nullptr;
  return r->out.files[i].first.c_str();
}

const unsigned char* dl_result_file_data(const dl_result* r, size_t i, size_t* size) {
  if (!r || i >= r->out.files.size()) return nullptr;
  const std::string& bytes = r->out.files[i].second;
  if (size) *size = bytes.size();
  return reinterpret_cast<const unsigned char*>(bytes.data());
}

dl_status dl_result_write(const dl_result* r, const char* dir) {
  if (!r) return null_arg("result");
  if (!dir) return null_arg("directory");
  return guarded([&] { dimlift::write_outputs(r->out, dir); });
}

void dl_result_free(dl_result* r) { delete r; }

const char* dl_compat_config(const char* family, const char* sequence) {
  if (!family || !sequence) {
    null_arg("family or sequence");
    return nullptr;
  }
  const dl_status s = guarded([&] { g_config = dimlift::compat_config_for(family, sequence); });
  return s == DL_OK ? g_config.c_str() : nullptr;
}

const char* dl_last_error(void) { return g_error.c_str(); }

const char* dl_status_name(dl_status s) {
  if (s == DL_OK) return "Ok";
  if (s == DL_INTERNAL_ERROR) return "InternalError";
  return dimlift::to_string(static_cast<dimlift::ErrorCode>(s));
}

int dl_exit_code(dl_status s) {
  if (s == DL_OK) return 0;
  if (s == DL_INTERNAL_ERROR) return 1;
  return dimlift::exit_code_for(static_cast<dimlift::ErrorCode>(s));
}

const char* dl_version(void) { return "1.0.0"; }

}  // extern "C"

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

/* C interface of the dimlift library. Every call returns a status; on
 * failure dl_last_error() holds the message for the calling thread. */
#ifndef DIMLIFT_DIMLIFT_H
#define DIMLIFT_DIMLIFT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DL_API __declspec(dllexport)
#else
#define DL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dl_status {
  DL_OK = 0,
  DL_INVALID_INPUT = 1,
  DL_EMBED_ERROR = 2,
  DL_NORM_ERROR = 3,
  DL_SIZE_CAP_EXCEEDED = 4,
  DL_FIT_ERROR = 5,
  DL_TRAIN_DIVERGED = 6,
  DL_CONFIG_ERROR = 7,
  DL_PARSE_ERROR = 8,
  DL_IO_ERROR = 9,
  DL_CHECK_FAILED = 10,
  DL_INTERNAL_ERROR = 99
} dl_status;

/* Outputs of one command. Owned by the caller; release with dl_result_free. */
typedef struct dl_result dl_result;

/* has_seed = 0 keeps the seed from the config. */
DL_API dl_status dl_run_compat(const char* config_json, int has_seed, uint64_t seed,
                               dl_result** out);
DL_API dl_status dl_run_transfer(const char* config_json, int has_seed, uint64_t seed,
                                 dl_result** out);
/* out_dir may be NULL; it only sets the default dataset cache. */
DL_API dl_status dl_run_sizegen(const char* config_json, int has_seed, uint64_t seed,
                                const char* out_dir, dl_result** out);
/* a and b are matrix text documents; b may be NULL for "cut". */
DL_API dl_status dl_metric(const char* kind, const char* a, const char* b, double p,
                           dl_result** out);

/* Process exit code the command asks for (0 pass, 1 check or fit failure). */
DL_API int dl_result_exit_code(const dl_result* r);
DL_API const char* dl_result_json(const dl_result* r);
DL_API const char* dl_result_csv(const dl_result* r);
DL_API const char* dl_result_text(const dl_result* r);
DL_API size_t dl_result_file_count(const dl_result* r);
DL_API const char* dl_result_file_name(const dl_result* r, size_t i);
DL_API const unsigned char* dl_result_file_data(const dl_result* r, size_t i, size_t* size);
/* Writes every output file under dir, atomically per file. */
DL_API dl_status dl_result_write(const dl_result* r, const char* dir);
DL_API void dl_result_free(dl_result* r);

/* Minimal compat config for a family and sequence name. The string lives
 * until the next call on the same thread. NULL on failure. */
DL_API const char* dl_compat_config(const char* family, const char* sequence);

DL_API const char* dl_last_error(void);
DL_API const char* dl_status_name(dl_status s);
/* Exit code convention of the command line tool for a failed status. */
DL_API int dl_exit_code(dl_status s);
DL_API const char* dl_version(void);

#ifdef __cplusplus
}
#endif

#endif

/* Copyright 2026 The sead Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to libsead. Every function returns a sead_status; on failure
 * sead_last_error() describes the problem for the calling thread until the
 * next failing call. Objects are opaque and released with their _free
 * function; passing NULL to a _free function is a no-op. */

#ifndef SEAD_SEAD_H_
#define SEAD_SEAD_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SEAD_API __declspec(dllexport)
#else
#define SEAD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as process exit codes for the command-line tool. */
typedef enum sead_status {
  SEAD_OK = 0,
  SEAD_ERR_CONTRACT = 1, /* invalid input, config, shape, or contract */
  SEAD_ERR_IO = 2,
  SEAD_ERR_NUMERIC = 3, /* non-finite values, divergence */
} sead_status;

typedef struct sead_model sead_model;
typedef struct sead_adapters sead_adapters;
typedef struct sead_run sead_run;

SEAD_API const char* sead_version(void);
SEAD_API const char* sead_last_error(void);

/* Models. */
SEAD_API sead_status sead_model_create(int bands, int hidden, uint64_t seed, sead_model** out);
SEAD_API sead_status sead_model_load(const char* path, sead_model** out);
SEAD_API sead_status sead_model_save(const sead_model* model, const char* path);
SEAD_API void sead_model_free(sead_model* model);
SEAD_API sead_status sead_model_dims(const sead_model* model, int* bands, int* hidden);
SEAD_API sead_status sead_model_param_count(const sead_model* model, uint64_t* out);
SEAD_API sead_status sead_model_hash(const sead_model* model, uint64_t* out);
/* Enhances n samples at 16 kHz into `out` (n samples). `adapters` may be
 * NULL. */
SEAD_API sead_status sead_model_enhance(const sead_model* model, const sead_adapters* adapters,
                                        const double* in, size_t n, double* out);

/* LoRA adapters for the two fully connected layers. */
SEAD_API sead_status sead_adapters_create(const sead_model* model, int rank, double scale,
                                          uint64_t seed, sead_adapters** out);
SEAD_API sead_status sead_adapters_load(const char* path, sead_adapters** out);
SEAD_API sead_status sead_adapters_save(const sead_adapters* adapters, const char* path);
SEAD_API void sead_adapters_free(sead_adapters* adapters);
SEAD_API sead_status sead_adapters_param_count(const sead_adapters* adapters, uint64_t* out);
/* New model whose weights are W0 + scale * B A. */
SEAD_API sead_status sead_adapters_merge(const sead_model* model, const sead_adapters* adapters,
                                         sead_model** out);
/* Adaptable parameter count for rank r on both layers at the given dims. */
SEAD_API sead_status sead_lora_param_count(int bands, int hidden, int rank, uint64_t* out);

/* Metrics; `saturated` may be NULL. */
SEAD_API sead_status sead_si_sdr(const double* estimate, const double* reference, size_t n,
                                 double* db, int* saturated);
SEAD_API sead_status sead_snr_db(const double* estimate, const double* reference, size_t n,
                                 double* db, int* saturated);

/* Pipeline runs driven by a JSON config file. */
typedef void (*sead_log_fn)(const char* line, void* user);

SEAD_API sead_status sead_run_open(const char* config_path, sead_run** out);
SEAD_API void sead_run_free(sead_run* run);
SEAD_API sead_status sead_run_set_log(sead_run* run, sead_log_fn fn, void* user);
/* Keys: "updates", "lr", "jobs", "wav_dir". Must precede the first
 * subcommand call. */
SEAD_API sead_status sead_run_set_option(sead_run* run, const char* key, const char* value);
SEAD_API sead_status sead_run_synth_data(sead_run* run);
SEAD_API sead_status sead_run_pretrain(sead_run* run);
/* method: "lora" | "remixit"; mode: "isolated" | "sequential". */
SEAD_API sead_status sead_run_adapt(sead_run* run, const char* method, const char* mode);
SEAD_API sead_status sead_run_rank_scale_grid(sead_run* run, const char* mode);
SEAD_API sead_status sead_run_eval(sead_run* run);
SEAD_API sead_status sead_run_report(sead_run* run);

#ifdef __cplusplus
}
#endif

#endif /* SEAD_SEAD_H_ */

/* Copyright 2026 The fedamole Authors
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

/* C interface to the fedamole simulator. Handles are opaque; every fallible
 * call returns a fam_status and leaves a thread-local message readable via
 * fam_last_error(). Strings returned through char** are released with
 * fam_string_free(). */

#ifndef FEDAMOLE_FEDAMOLE_H_
#define FEDAMOLE_FEDAMOLE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(FAM_BUILDING_LIBRARY)
#define FAM_API __attribute__((visibility("default")))
#else
#define FAM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fam_status {
  FAM_OK = 0,
  FAM_ERR_INVALID_ARGUMENT = 1,
  FAM_ERR_DIMENSION = 2,
  FAM_ERR_CONFIG = 3,        /* invalid or infeasible config value */
  FAM_ERR_CONFIG_IO = 4,     /* missing or unreadable file */
  FAM_ERR_CONFIG_PARSE = 5,  /* malformed JSON */
  FAM_ERR_INFEASIBLE = 6,
  FAM_ERR_PROTOCOL = 7,
  FAM_ERR_DATA = 8,
  FAM_ERR_INTERNAL = 9
} fam_status;

typedef enum fam_mode {
  FAM_MODE_FEDAMOLE = 0,
  FAM_MODE_FEDIT = 1,
  FAM_MODE_FEDIT_FT = 2,
  FAM_MODE_ABLATE_H = 3,
  FAM_MODE_ABLATE_S = 4,
  FAM_MODE_ABLATE_R = 5,
  FAM_MODE_RANDOM = 6
} fam_mode;

typedef struct fam_config fam_config;
typedef struct fam_metric_log fam_metric_log;

FAM_API const char* fam_version(void);
FAM_API const char* fam_status_string(fam_status status);
/* Message of the last failure on this thread; "" if none. */
FAM_API const char* fam_last_error(void);
/* Dotted config key of the last config failure on this thread; "" if none. */
FAM_API const char* fam_last_error_key(void);
FAM_API void fam_string_free(char* s);

FAM_API fam_status fam_config_default(fam_config** out);
FAM_API fam_status fam_config_load(const char* path, fam_config** out);
/* Blank text yields the defaults. */
FAM_API fam_status fam_config_parse(const char* json_text, fam_config** out);
/* Overlays keys from a JSON object and re-validates. On failure the config
 * is left unchanged. */
FAM_API fam_status fam_config_set_json(fam_config* cfg, const char* json_text);
FAM_API fam_status fam_config_to_json(const fam_config* cfg, char** out_json);
FAM_API void fam_config_free(fam_config* cfg);
/* output.dir; valid until the config is modified or freed. */
FAM_API const char* fam_config_output_dir(const fam_config* cfg);

FAM_API fam_status fam_mode_from_string(const char* name, fam_mode* out);
/* NULL for an unknown mode. */
FAM_API const char* fam_mode_name(fam_mode mode);

FAM_API fam_status fam_run_training(const fam_config* cfg, fam_mode mode,
                                    uint64_t seed, fam_metric_log** out);
FAM_API size_t fam_metric_log_rounds(const fam_metric_log* log);
FAM_API size_t fam_metric_log_clients(const fam_metric_log* log);
/* round is 1-based. */
FAM_API fam_status fam_metric_log_accuracy(const fam_metric_log* log,
                                           size_t round, size_t client,
                                           double* out);
FAM_API fam_status fam_metric_log_loss(const fam_metric_log* log, size_t round,
                                       size_t client, double* out);
FAM_API fam_status fam_metric_log_mta(const fam_metric_log* log, size_t round,
                                      double* out);
FAM_API fam_status fam_metric_log_mtal(const fam_metric_log* log, double* out);
FAM_API void fam_metric_log_free(fam_metric_log* log);

/* Runs every mode for every seed, writing events_<mode>_seed<seed>.jsonl and
 * summary.csv. n_seeds == 0 uses the config's seeds; out_dir == NULL uses
 * output.dir. */
FAM_API fam_status fam_experiment_run(const fam_config* cfg,
                                      const fam_mode* modes, size_t n_modes,
                                      const uint64_t* seeds, size_t n_seeds,
                                      const char* out_dir);
/* Plain-text table of mean and population std MTAL per mode. */
FAM_API fam_status fam_report(const char* const* csv_paths, size_t n_paths,
                              char** out_text);

/* probabilities: row-major [clients x experts]; out_matrix receives the 0/1
 * assignment in the same layout. out_objective may be NULL. */
FAM_API fam_status fam_solve_assignment(const double* probabilities,
                                        size_t clients, size_t experts,
                                        size_t k_e, size_t k_c, size_t b,
                                        uint8_t* out_matrix,
                                        double* out_objective);
FAM_API fam_status fam_rouge_l(const int32_t* hypothesis, size_t n_hypothesis,
                               const int32_t* reference, size_t n_reference,
                               double* out);

#ifdef __cplusplus
}
#endif

#endif /* FEDAMOLE_FEDAMOLE_H_ */

/* Copyright 2026 The pimtl Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface of libpimtl. All functions return a pimtl_status; on failure
 * pimtl_last_error() describes the error for the calling thread. Strings
 * returned through char** are owned by the caller and released with
 * pimtl_string_free().
 */
#ifndef PIMTL_PIMTL_H_
#define PIMTL_PIMTL_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PIMTL_API __declspec(dllexport)
#else
#define PIMTL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pimtl_status {
  PIMTL_OK = 0,
  PIMTL_ERR_INVALID_ARGUMENT = 1,
  PIMTL_ERR_DIMENSION = 2,
  PIMTL_ERR_CONFIG = 3,
  PIMTL_ERR_IO = 4,
  PIMTL_ERR_PARSE = 5,
  PIMTL_ERR_VERSION = 6,
  PIMTL_ERR_STATE = 7,
  PIMTL_ERR_COMPATIBILITY = 8,
  PIMTL_ERR_DATA = 9,
  PIMTL_ERR_DIVERGED = 10,
  PIMTL_ERR_UNSTABLE = 11,
  PIMTL_ERR_LENGTH = 12,
  PIMTL_ERR_INTERNAL = 13,
  PIMTL_ERR_UNDEFINED = 14
} pimtl_status;

typedef enum pimtl_format { PIMTL_FORMAT_BINARY = 0, PIMTL_FORMAT_CSV = 1 } pimtl_format;

typedef struct pimtl_config pimtl_config;
typedef struct pimtl_model pimtl_model;

PIMTL_API const char* pimtl_version(void);
/* Stable lower-case name such as "config" or "diverged". */
PIMTL_API const char* pimtl_status_name(pimtl_status status);
/* Message of the last failed call on this thread; "" when none. */
PIMTL_API const char* pimtl_last_error(void);
PIMTL_API void pimtl_string_free(char* s);
/* "error", "warn", "info" or "debug". Overrides PIMTL_LOG. */
PIMTL_API pimtl_status pimtl_set_log_level(const char* level);

/* ---------------------------------------------------------------- config */

PIMTL_API pimtl_status pimtl_config_new(pimtl_config** out);
PIMTL_API pimtl_status pimtl_config_load(const char* path, pimtl_config** out);
PIMTL_API pimtl_status pimtl_config_parse(const char* toml_text, pimtl_config** out);
/* key is "section.name"; value is a TOML literal such as 3, 0.5, "single". */
PIMTL_API pimtl_status pimtl_config_set(pimtl_config* config, const char* key, const char* value);
PIMTL_API pimtl_status pimtl_config_get(const pimtl_config* config, const char* key, char** value);
PIMTL_API pimtl_status pimtl_config_to_toml(const pimtl_config* config, char** out);
PIMTL_API pimtl_status pimtl_config_hash(const pimtl_config* config, char** out);
/* One line per key: "key<TAB>default<TAB>description". */
PIMTL_API pimtl_status pimtl_config_reference(char** out);
PIMTL_API void pimtl_config_free(pimtl_config* config);

/* Checks a method name (CNN-1, CNN-2, CNN-KT, Pi-CNN-1, Pi-CNN-2, Pi-CNN-KT). */
PIMTL_API pimtl_status pimtl_method_check(const char* name);

/* -------------------------------------------------------------- commands */

PIMTL_API pimtl_status pimtl_synth(const pimtl_config* config, const char* out_dir, pimtl_format format);
PIMTL_API pimtl_status pimtl_preprocess(const pimtl_config* config, const char* raw_dir, const char* out_dir,
                                        pimtl_format format);
PIMTL_API pimtl_status pimtl_train(const pimtl_config* config, const char* data_dir, const char* method,
                                   const char* out_dir);
PIMTL_API pimtl_status pimtl_personalize(const pimtl_config* config, const char* data_dir,
                                         const char* generic_checkpoint, const char* method, double fraction,
                                         const char* out_dir);
PIMTL_API pimtl_status pimtl_evaluate(const pimtl_config* config, const char* data_dir, const char* checkpoint,
                                      const char* out_dir);
/* data_dir may be NULL (dataset generated from the config). The run
 * directory is returned through run_dir when it is not NULL. */
PIMTL_API pimtl_status pimtl_experiment(const pimtl_config* config, const char* data_dir, const char* out_root,
                                        int jobs, char** run_dir);

/* ----------------------------------------------------------------- model */

PIMTL_API pimtl_status pimtl_model_load(const char* checkpoint, pimtl_model** out);
PIMTL_API pimtl_status pimtl_model_shape(const pimtl_model* model, size_t* channels, size_t* window,
                                         size_t* outputs);
/* inputs: count x channels x window; outputs: count x outputs (forces, then
 * angle in rad). Inference mode; deterministic. */
PIMTL_API pimtl_status pimtl_model_predict(pimtl_model* model, const double* inputs, size_t count,
                                           double* outputs);
PIMTL_API void pimtl_model_free(pimtl_model* model);

/* --------------------------------------------------------------- metrics */

PIMTL_API pimtl_status pimtl_rmse(const double* y, const double* yhat, size_t n, double* out);
PIMTL_API pimtl_status pimtl_pearson_cc(const double* y, const double* yhat, size_t n, double* out);
PIMTL_API pimtl_status pimtl_normalized_rmse(const double* y, const double* yhat, size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif /* PIMTL_PIMTL_H_ */

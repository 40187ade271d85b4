/*
 * Copyright (c) 2026, The attrgen Authors.  All rights reserved.
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

#ifndef ATTRGEN_ATTRGEN_H
#define ATTRGEN_ATTRGEN_H

/* C interface to the attrgen library.
 *
 * Every call returns an attrgen_status. On failure, attrgen_last_error()
 * returns a message for the calling thread until its next call. Strings
 * returned through char** out-parameters are owned by the caller and must be
 * released with attrgen_string_free. Structured inputs and outputs are JSON
 * (or JSON Lines where noted). */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define ATTRGEN_API __attribute__((visibility("default")))
#else
#define ATTRGEN_API
#endif

typedef enum attrgen_status {
  ATTRGEN_OK = 0,
  ATTRGEN_E_INVALID_ARGUMENT = 1,
  ATTRGEN_E_VALIDATION = 2,
  ATTRGEN_E_LOOKUP = 3,
  ATTRGEN_E_PARSE = 4,
  ATTRGEN_E_CONSISTENCY = 5,
  ATTRGEN_E_IO = 6,
  ATTRGEN_E_INDEX = 7,
  ATTRGEN_E_LENGTH = 8,
  ATTRGEN_E_SHAPE = 9,
  ATTRGEN_E_NUMERIC = 10,
  ATTRGEN_E_DEGENERATE = 11,
  ATTRGEN_E_CONFIGURATION = 12,
  ATTRGEN_E_NOT_FOUND = 13,
  ATTRGEN_E_CONFLICT = 14,
  ATTRGEN_E_BUSY = 15,
  ATTRGEN_E_PRECONDITION = 16,
  ATTRGEN_E_INTERNAL = 99
} attrgen_status;

typedef struct attrgen_catalog attrgen_catalog;
typedef struct attrgen_lm attrgen_lm;
typedef struct attrgen_extractor attrgen_extractor;
typedef struct attrgen_reward attrgen_reward;
typedef struct attrgen_service attrgen_service;

ATTRGEN_API const char* attrgen_version(void);
ATTRGEN_API const char* attrgen_status_name(attrgen_status status);
ATTRGEN_API const char* attrgen_last_error(void);
ATTRGEN_API void attrgen_string_free(char* s);

/* Catalog. spec_json may be NULL or "{}" for defaults. */
ATTRGEN_API attrgen_status attrgen_catalog_generate(const char* spec_json, attrgen_catalog** out);
ATTRGEN_API attrgen_status attrgen_catalog_load(const char* path, attrgen_catalog** out);
ATTRGEN_API attrgen_status attrgen_catalog_save(const attrgen_catalog* catalog, const char* path);
/* {"ok": bool, "problems": [...]} */
ATTRGEN_API attrgen_status attrgen_catalog_check(const attrgen_catalog* catalog, char** report_json);
/* Counts per split and the attribute vocabulary. */
ATTRGEN_API attrgen_status attrgen_catalog_info(const attrgen_catalog* catalog, char** info_json);
ATTRGEN_API void attrgen_catalog_free(attrgen_catalog* catalog);

/* Language model. */
ATTRGEN_API attrgen_status attrgen_lm_train(const attrgen_catalog* catalog, const char* hyper_json,
                                            attrgen_lm** out, char** report_json);
ATTRGEN_API attrgen_status attrgen_lm_load(const char* path, attrgen_lm** out);
ATTRGEN_API attrgen_status attrgen_lm_save(const attrgen_lm* lm, const char* path);
/* Finite-difference check of the training loss gradient on a small model
 * built for the catalog. */
ATTRGEN_API attrgen_status attrgen_lm_gradcheck(const attrgen_catalog* catalog, double eps,
                                                size_t coordinates, uint64_t seed,
                                                char** report_json);
ATTRGEN_API void attrgen_lm_free(attrgen_lm* lm);

/* Attribute extractor. */
ATTRGEN_API attrgen_status attrgen_extractor_train(const attrgen_catalog* catalog,
                                                   const char* hyper_json,
                                                   attrgen_extractor** out, char** report_json);
ATTRGEN_API attrgen_status attrgen_extractor_load(const char* path, attrgen_extractor** out);
ATTRGEN_API attrgen_status attrgen_extractor_save(const attrgen_extractor* ex, const char* path);
/* Predicted attributes of a catalog product, at confidence floor c_min. */
ATTRGEN_API attrgen_status attrgen_extractor_predict(const attrgen_extractor* ex,
                                                     const attrgen_catalog* catalog,
                                                     const char* product_id, double c_min,
                                                     char** out_json);
ATTRGEN_API void attrgen_extractor_free(attrgen_extractor* ex);

/* Reward model. lm may be NULL (no warm start); labels_jsonl may be NULL
 * (phase 1 only). */
ATTRGEN_API attrgen_status attrgen_reward_train(const attrgen_catalog* catalog,
                                                const attrgen_lm* lm, const char* labels_jsonl,
                                                const char* hyper_json, attrgen_reward** out,
                                                char** report_json);
ATTRGEN_API attrgen_status attrgen_reward_load(const char* path, attrgen_reward** out);
ATTRGEN_API attrgen_status attrgen_reward_save(const attrgen_reward* reward, const char* path);
/* {"c": 0|1, "score": s} for a description of a catalog product. */
ATTRGEN_API attrgen_status attrgen_reward_score(const attrgen_reward* reward,
                                                const attrgen_catalog* catalog,
                                                const char* product_id, const char* description,
                                                char** out_json);
/* Accuracy on a label file. */
ATTRGEN_API attrgen_status attrgen_reward_eval(const attrgen_reward* reward,
                                               const attrgen_catalog* catalog,
                                               const char* labels_jsonl, char** out_json);
ATTRGEN_API void attrgen_reward_free(attrgen_reward* reward);

/* One description for a catalog product. config_json holds decoding keys
 * (top_k, mu, temperature, max_len, max_retries, seed, boost) plus c_min,
 * use_ground_truth, filter and trace. reward may be NULL unless filter is set. */
ATTRGEN_API attrgen_status attrgen_generate(const attrgen_lm* lm, const attrgen_extractor* ex,
                                            const attrgen_reward* reward,
                                            const attrgen_catalog* catalog,
                                            const char* product_id, const char* config_json,
                                            char** out_json);

/* Metrics over a prediction file; returns JSON Lines (rows, then summary). */
ATTRGEN_API attrgen_status attrgen_evaluate(const attrgen_catalog* catalog,
                                            const char* predictions_jsonl, char** report_jsonl);
/* One-sided pooled z-test of H1: x1/n1 > x2/n2. */
ATTRGEN_API attrgen_status attrgen_two_proportion_test(size_t x1, size_t n1, size_t x2, size_t n2,
                                                       double* z, double* p_value);

/* Finetunes lm in place. config_json.critic is "oracle" or "reward"; the
 * latter needs reward. Returns the JSON Lines training log and summary. */
ATTRGEN_API attrgen_status attrgen_finetune(attrgen_lm* lm, const attrgen_catalog* catalog,
                                            const attrgen_reward* reward, const char* config_json,
                                            char** log_jsonl);

/* Labeling service. config is "key = value" text. */
ATTRGEN_API attrgen_status attrgen_service_open(const char* config_kv, attrgen_service** out);
/* In-process request; query is "a=1&b=2" or NULL. The HTTP status is written
 * to *http_status and the JSON body to *body. Returns ATTRGEN_OK whenever a
 * response was produced, including error responses. */
ATTRGEN_API attrgen_status attrgen_service_request(attrgen_service* svc, const char* method,
                                                   const char* path, const char* query,
                                                   const char* body, int* http_status,
                                                   char** response_body);
/* Serves HTTP on a background thread. host NULL and port < 0 take the
 * configured values; port 0 picks a free port. */
ATTRGEN_API attrgen_status attrgen_service_listen(attrgen_service* svc, const char* host, int port,
                                                  int* bound_port);
ATTRGEN_API attrgen_status attrgen_service_wait_job(attrgen_service* svc, const char* job_id,
                                                    int timeout_ms, char** job_json);
ATTRGEN_API void attrgen_service_free(attrgen_service* svc);

#ifdef __cplusplus
}
#endif

#endif

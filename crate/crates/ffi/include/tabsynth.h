#ifndef TABSYNTH_H
#define TABSYNTH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_ARGUMENT = 1,
  TS_STATUS_INVALID_UTF8 = 2,
  TS_STATUS_CONFIG_ERROR = 3,
  TS_STATUS_BUDGET_ERROR = 4,
  TS_STATUS_DATA_ERROR = 5,
  TS_STATUS_IO_ERROR = 6,
  TS_STATUS_PANIC = 7,
} TsStatus;

typedef enum TsProvenance {
  TS_PROVENANCE_PRIVATE = 0,
  TS_PROVENANCE_PUBLIC = 1,
  TS_PROVENANCE_SYNTHETIC = 2,
} TsProvenance;

typedef enum TsNorm {
  TS_NORM_L1 = 0,
  TS_NORM_LINF = 1,
} TsNorm;

typedef struct TsDataset TsDataset;

typedef struct TsSchema TsSchema;

typedef struct TsWorkload TsWorkload;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *ts_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ts_version(void);

/**
 * Parses a schema from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TsStatus ts_schema_from_json(const char *json, struct TsSchema **out);

/**
 * # Safety
 * `schema` must be null or a handle from [`ts_schema_from_json`].
 */
size_t ts_schema_column_count(const struct TsSchema *schema);

/**
 * # Safety
 * `schema` must be null or a handle not yet freed.
 */
void ts_schema_free(struct TsSchema *schema);

/**
 * Loads a CSV file. Private data rejects out-of-range numerics; other
 * provenances clamp them.
 *
 * # Safety
 * `schema` must be a live handle, `path` a NUL-terminated string and `out` a
 * valid pointer.
 */
enum TsStatus ts_dataset_load_csv(const struct TsSchema *schema,
                                  const char *path,
                                  enum TsProvenance provenance,
                                  struct TsDataset **out);

/**
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t ts_dataset_len(const struct TsDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void ts_dataset_free(struct TsDataset *dataset);

/**
 * All k-way marginals over the schema's columns.
 *
 * # Safety
 * `schema` must be a live handle and `out` a valid pointer.
 */
enum TsStatus ts_workload_marginal(const struct TsSchema *schema,
                                   size_t k,
                                   struct TsWorkload **out);

/**
 * Number of linear queries in the workload.
 *
 * # Safety
 * `workload` must be null or a live handle.
 */
size_t ts_workload_len(const struct TsWorkload *workload);

/**
 * # Safety
 * `workload` must be null or a handle not yet freed.
 */
void ts_workload_free(struct TsWorkload *workload);

/**
 * Workload error between two datasets over the workload's schema.
 *
 * # Safety
 * All handles must be live and `out` a valid pointer.
 */
enum TsStatus ts_workload_error(const struct TsWorkload *workload,
                                const struct TsDataset *a,
                                const struct TsDataset *b,
                                enum TsNorm norm,
                                double *out);

/**
 * Gaussian σ for an (ε, δ) budget and L2 sensitivity. An infinite ε gives 0.
 *
 * # Safety
 * `out_sigma` must be a valid pointer.
 */
enum TsStatus ts_calibrate(double epsilon, double delta, double sensitivity, double *out_sigma);

/**
 * Runs an experiment config. `out_dir` may be null to keep the config's
 * output directory.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `out_dir` null or one.
 */
enum TsStatus ts_run_experiment(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TABSYNTH_H */

/* SPDX-License-Identifier: Apache-2.0 */

#ifndef FAASFLOW_H
#define FAASFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FfStatus {
  FF_STATUS_OK = 0,
  FF_STATUS_NULL_ARGUMENT = 1,
  FF_STATUS_INVALID_UTF8 = 2,
  FF_STATUS_NOT_FOUND = 3,
  FF_STATUS_RANGE = 4,
  FF_STATUS_FORMAT = 5,
  FF_STATUS_PARAM = 6,
  FF_STATUS_CONFIG = 7,
  FF_STATUS_STAGE_FAILED = 8,
  FF_STATUS_IO = 9,
  FF_STATUS_INTERNAL = 10,
} FfStatus;

/**
 * Opaque object store handle.
 */
typedef struct FfStore FfStore;

/**
 * Bytes owned by the library.
 */
typedef struct FfBuffer {
  uint8_t *data;
  size_t len;
} FfBuffer;

/**
 * Summary of a pipeline run.
 */
typedef struct FfRunSummary {
  /**
   * Key of the call set inside the configured bucket; free with `ff_string_free`.
   */
  char *output_key;
  size_t align_tasks;
  size_t reduce_tasks;
  double gb_seconds;
  double gbsec_usd;
  uint64_t scan_bytes;
  double select_usd;
} FfRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *ff_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void ff_string_free(char *s);

/**
 * # Safety
 * `buf` must come from this library and be freed once.
 */
void ff_buffer_free(struct FfBuffer buf);

/**
 * Opens (creating if needed) a store rooted at `root`. Returns null on
 * failure.
 *
 * # Safety
 * `root` must be a NUL-terminated string.
 */
struct FfStore *ff_store_open(const char *root);

/**
 * # Safety
 * `s` must be null or a handle from `ff_store_open`, freed once.
 */
void ff_store_free(struct FfStore *s);

/**
 * # Safety
 * Strings must be NUL-terminated; `data` must point to `len` bytes.
 */
enum FfStatus ff_store_put(const struct FfStore *s,
                           const char *bucket,
                           const char *key,
                           const uint8_t *data,
                           size_t len);

/**
 * Size of an object in bytes.
 *
 * # Safety
 * Strings must be NUL-terminated; `size` must be writable.
 */
enum FfStatus ff_store_head(const struct FfStore *s,
                            const char *bucket,
                            const char *key,
                            uint64_t *size);

/**
 * Bytes `[lo, hi)` of an object.
 *
 * # Safety
 * Strings must be NUL-terminated; `result` must be writable.
 */
enum FfStatus ff_store_get_range(const struct FfStore *s,
                                 const char *bucket,
                                 const char *key,
                                 uint64_t lo,
                                 uint64_t hi,
                                 struct FfBuffer *result);

/**
 * Builds `<key>.fai` next to a FASTA object and returns its text.
 *
 * # Safety
 * Strings must be NUL-terminated; `fai` must be writable.
 */
enum FfStatus ff_index_fasta(const struct FfStore *s,
                             const char *bucket,
                             const char *key,
                             char **fai);

/**
 * Projects `columns` of every row whose `pred_column` value lies in
 * `[lo, hi]`; pass `has_predicate = 0` to keep all rows. Rows come back as
 * tab-separated lines.
 *
 * # Safety
 * Strings must be NUL-terminated; `columns` must point to `n_columns`
 * values; `rows` and `bytes_scanned` must be writable.
 */
enum FfStatus ff_select(const struct FfStore *s,
                        const char *bucket,
                        const char *key,
                        const size_t *columns,
                        size_t n_columns,
                        bool has_predicate,
                        size_t pred_column,
                        int64_t lo,
                        int64_t hi,
                        char **rows,
                        uint64_t *bytes_scanned);

/**
 * Runs the pipeline configured by `config_text` (`key = value` lines).
 *
 * # Safety
 * `config_text` must be NUL-terminated; `summary` must be writable. On
 * success free `summary->output_key` with `ff_string_free`.
 */
enum FfStatus ff_run_pipeline(const char *config_text, struct FfRunSummary *summary);

/**
 * Σ memory_mb[i] / 1024 × billed_s[i] × usd_per_gbsec. Returns a negative
 * value when an array is null with `n > 0`.
 *
 * # Safety
 * Both arrays must hold `n` values.
 */
double ff_gbsec_cost(const uint64_t *memory_mb,
                     const double *billed_s,
                     size_t n,
                     double usd_per_gbsec);

/**
 * `bytes / 2^30 × usd_per_gb`.
 */
double ff_select_cost(uint64_t bytes_scanned, double usd_per_gb);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAASFLOW_H */

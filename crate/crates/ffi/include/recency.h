#ifndef RECENCY_H
#define RECENCY_H

/* Generated by cbindgen from the recency-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define RECENCY_OK 0

/**
 * Filesystem failure (unreadable or unwritable path).
 */
#define RECENCY_ERR_IO 1

/**
 * Malformed input file or unusable configuration value.
 */
#define RECENCY_ERR_SCHEMA 2

/**
 * An estimator or calibration precondition does not hold for the data.
 */
#define RECENCY_ERR_PRECONDITION 3

/**
 * A numeric routine failed to converge or met a non-finite value.
 */
#define RECENCY_ERR_NUMERIC 4

/**
 * Misused ABI: null pointer, invalid UTF-8, or a bad handle.
 */
#define RECENCY_ERR_ARGUMENT 5

/**
 * Opaque dataset handle: subject records plus assay calibration.
 */
typedef struct RecencyDataset RecencyDataset;

/**
 * One bootstrapped estimate. `lo`/`hi` bound the 95% interval; `se` is the
 * replicate standard deviation; `failures` counts rounds whose estimator
 * failed; `unreliable` is set when more than 10% of rounds failed.
 */
typedef struct RecencyInterval {
  double estimate;
  double lo;
  double hi;
  double se;
  uint32_t rounds;
  uint32_t failures;
  uint32_t nonpositive;
  bool unreliable;
} RecencyInterval;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * ABI revision; bumped on any breaking change to this header.
 */
uint32_t recency_abi_version(void);

/**
 * The message for the most recent failure on this thread, empty when the
 * last call succeeded. The pointer stays valid until the next call into
 * this library from the same thread.
 */
const char *recency_last_error(void);

/**
 * Loads a dataset: a cross-sectional records CSV, an optional external
 * target records CSV (`target_csv` may be null), and an assay spec CSV
 * whose exact MDRI/FRR calibrate the estimators. On success `*out` owns
 * the handle; free it with `recency_dataset_free`.
 *
 * # Safety
 * Path arguments follow `recency_last_error`'s string rules; `out` must
 * point to writable storage for one pointer.
 */
int recency_dataset_load(const char *cross_csv,
                         const char *target_csv,
                         const char *assays_csv,
                         struct RecencyDataset **out);

/**
 * Record counts of a loaded dataset; `target_size` is 0 when no target
 * file was loaded. Null output pointers are skipped.
 *
 * # Safety
 * `handle` must come from `recency_dataset_load` and not be freed.
 */
int recency_dataset_counts(const struct RecencyDataset *handle,
                           size_t *cross_size,
                           size_t *target_size);

/**
 * Frees a dataset handle; a null handle is a no-op.
 *
 * # Safety
 * `handle` must come from `recency_dataset_load` and not be freed twice.
 */
void recency_dataset_free(struct RecencyDataset *handle);

/**
 * Point estimate of incidence (events per person-year). `estimator` is a
 * name from the CLI set (`standard`, `extended-external`, ...); `encoding`
 * is `main_effects` or `saturated`.
 *
 * # Safety
 * `handle` as in `recency_dataset_counts`; strings as in
 * `recency_dataset_load`; `out_estimate` must be writable.
 */
int recency_estimate(const struct RecencyDataset *handle,
                     const char *estimator,
                     const char *encoding,
                     double *out_estimate);

/**
 * Bootstrapped estimate: `scheme` is `nonparametric` or `parametric`,
 * `interval` is `lognormal_normal_approx` or `log_percentile`, `rounds`
 * must be at least 2, and `seed` fixes the resampling stream (equal seeds
 * reproduce bit-equal intervals).
 *
 * # Safety
 * As for `recency_estimate`; `out` must point to writable storage for one
 * `RecencyInterval`.
 */
int recency_estimate_ci(const struct RecencyDataset *handle,
                        const char *estimator,
                        const char *encoding,
                        const char *scheme,
                        const char *interval,
                        uint32_t rounds,
                        uint64_t seed,
                        struct RecencyInterval *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RECENCY_H */

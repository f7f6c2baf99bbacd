#ifndef SURVKIT_H
#define SURVKIT_H

/* Generated by cbindgen from survkit-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SurvkitStatus {
  /**
   * Success.
   */
  SURVKIT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SURVKIT_STATUS_NULL_POINTER = 1,
  /**
   * Arguments were malformed: empty, mismatched, non-finite, bad UTF-8.
   */
  SURVKIT_STATUS_INVALID_INPUT = 2,
  /**
   * The computation is undefined or unstable on these inputs.
   */
  SURVKIT_STATUS_NUMERIC_FAILURE = 3,
  /**
   * The cohort has no observed events.
   */
  SURVKIT_STATUS_NO_EVENTS = 4,
  /**
   * File or serialization failure.
   */
  SURVKIT_STATUS_IO_FAILURE = 5,
} SurvkitStatus;

/**
 * Opaque fitted Cox model handle.
 */
typedef struct SurvkitCox SurvkitCox;

/**
 * Opaque Kaplan-Meier curve handle.
 */
typedef struct SurvkitKm SurvkitKm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *survkit_version(void);

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *survkit_last_error_message(void);

/**
 * Fits a Kaplan-Meier curve. `events[i]` nonzero means subject `i` had the
 * event at `times[i]`; zero means censored then. On success writes a new
 * handle to `out`.
 *
 * # Safety
 * `times` and `events` must point to `n` elements; `out` must be valid.
 */
enum SurvkitStatus survkit_km_fit(const double *times,
                                  const uint8_t *events,
                                  size_t n,
                                  struct SurvkitKm **out);

/**
 * Number of distinct event times in the curve, which is the length of
 * every per-step array.
 *
 * # Safety
 * `km` must be a live handle from `survkit_km_fit` (or null, returning 0).
 */
size_t survkit_km_len(const struct SurvkitKm *km);

/**
 * Copies curve steps into caller buffers. Each output pointer may be null
 * to skip that column; non-null buffers need `survkit_km_len` elements.
 *
 * # Safety
 * `km` must be a live handle; non-null buffers must have the capacity
 * stated above.
 */
enum SurvkitStatus survkit_km_copy(const struct SurvkitKm *km,
                                   double *times,
                                   double *survival,
                                   double *ci_lower,
                                   double *ci_upper);

/**
 * Writes the median survival time, or NaN when the curve never reaches
 * one half.
 *
 * # Safety
 * `km` must be a live handle and `out` a valid pointer.
 */
enum SurvkitStatus survkit_km_median(const struct SurvkitKm *km, double *out);

/**
 * Frees a Kaplan-Meier handle. Null is a no-op.
 *
 * # Safety
 * `km` must be null or a handle not freed before.
 */
void survkit_km_free(struct SurvkitKm *km);

/**
 * Two-sample log-rank test. `groups[i]` is 0 or 1. Writes the chi-squared
 * statistic and its p-value.
 *
 * # Safety
 * `times`, `events`, `groups` must point to `n` elements; the two output
 * pointers must be valid.
 */
enum SurvkitStatus survkit_logrank(const double *times,
                                   const uint8_t *events,
                                   const uint8_t *groups,
                                   size_t n,
                                   double *out_statistic,
                                   double *out_p_value);

/**
 * Harrell's concordance index of a risk score.
 *
 * # Safety
 * `risks`, `times`, `events` must point to `n` elements; `out` must be a
 * valid pointer.
 */
enum SurvkitStatus survkit_concordance(const double *risks,
                                       const double *times,
                                       const uint8_t *events,
                                       size_t n,
                                       double *out);

/**
 * Fits a Cox proportional-hazards model on a row-major feature matrix
 * (`n_rows` by `n_cols`); columns are standardized internally. On success
 * writes a new handle to `out`.
 *
 * # Safety
 * `values` must point to `n_rows * n_cols` elements; `times` and `events`
 * to `n_rows` elements; `out` must be valid.
 */
enum SurvkitStatus survkit_cox_fit(const double *values,
                                   size_t n_rows,
                                   size_t n_cols,
                                   const double *times,
                                   const uint8_t *events,
                                   struct SurvkitCox **out);

/**
 * Number of fitted coefficients.
 *
 * # Safety
 * `fit` must be a live handle from `survkit_cox_fit` (or null, returning 0).
 */
size_t survkit_cox_n_features(const struct SurvkitCox *fit);

/**
 * Copies fitted quantities into caller buffers of `survkit_cox_n_features`
 * elements each. Any output pointer may be null to skip it.
 *
 * # Safety
 * `fit` must be a live handle; non-null buffers must have the capacity
 * stated above.
 */
enum SurvkitStatus survkit_cox_copy(const struct SurvkitCox *fit,
                                    double *coefficients,
                                    double *hazard_ratios,
                                    double *p_values);

/**
 * Predicts linear risk scores for a row-major matrix with the same column
 * layout the model was fitted on; writes `n_rows` values to `out_risks`.
 *
 * # Safety
 * `values` must point to `n_rows * n_cols` elements and `out_risks` to
 * `n_rows` elements.
 */
enum SurvkitStatus survkit_cox_predict(const struct SurvkitCox *fit,
                                       const double *values,
                                       size_t n_rows,
                                       size_t n_cols,
                                       double *out_risks);

/**
 * Frees a Cox handle. Null is a no-op.
 *
 * # Safety
 * `fit` must be null or a handle not freed before.
 */
void survkit_cox_free(struct SurvkitCox *fit);

/**
 * Runs the full pipeline: `manifest_path` names a dataset manifest (TOML),
 * `config_path` an optional pipeline config (null for defaults), and
 * `out_dir` the report directory, created if absent.
 *
 * # Safety
 * Paths must be NUL-terminated strings; `config_path` may be null.
 */
enum SurvkitStatus survkit_pipeline_run(const char *manifest_path,
                                        const char *config_path,
                                        const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SURVKIT_H */

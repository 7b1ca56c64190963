#ifndef PCDIFF_H
#define PCDIFF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The first four match the CLI exit codes.
 */
typedef enum PcdStatus {
  PCD_STATUS_OK = 0,
  PCD_STATUS_VERIFY_FAILED = 1,
  PCD_STATUS_INVALID_ARGUMENT = 2,
  PCD_STATUS_IO = 3,
  PCD_STATUS_NUMERIC = 4,
  PCD_STATUS_NULL_POINTER = 5,
  PCD_STATUS_PANIC = 6,
} PcdStatus;

/**
 * Trained preference classifier.
 */
typedef struct PcdClassifier PcdClassifier;

/**
 * Trained noise-prediction model.
 */
typedef struct PcdDiffusion PcdDiffusion;

/**
 * Guidance settings for [`pcd_sample`].
 */
typedef struct PcdGuidance {
  double gamma;
  size_t max_resamples;
  bool rejection_enabled;
  bool unbounded;
} PcdGuidance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *pcd_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *pcd_last_error(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum PcdStatus pcd_diffusion_load(const char *path, struct PcdDiffusion **out);

/**
 * Same as [`pcd_diffusion_load`] from an in-memory checkpoint.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` be writable.
 */
enum PcdStatus pcd_diffusion_from_bytes(const uint8_t *data, size_t len, struct PcdDiffusion **out);

/**
 * # Safety
 * `model` must come from this library and not be freed twice. Null is a no-op.
 */
void pcd_diffusion_free(struct PcdDiffusion *model);

/**
 * Data dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t pcd_diffusion_data_dim(const struct PcdDiffusion *model);

/**
 * Number of diffusion steps `T`, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t pcd_diffusion_steps(const struct PcdDiffusion *model);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum PcdStatus pcd_classifier_load(const char *path, struct PcdClassifier **out);

/**
 * # Safety
 * `data` must point to `len` readable bytes and `out` be writable.
 */
enum PcdStatus pcd_classifier_from_bytes(const uint8_t *data,
                                         size_t len,
                                         struct PcdClassifier **out);

/**
 * # Safety
 * `clf` must come from this library and not be freed twice. Null is a no-op.
 */
void pcd_classifier_free(struct PcdClassifier *clf);

/**
 * Preference score `S(x)` in (0, 1) at timestep `t`.
 *
 * # Safety
 * `x` must hold `dim` values and `out` be writable.
 */
enum PcdStatus pcd_classifier_score(const struct PcdClassifier *clf,
                                    const double *x,
                                    size_t dim,
                                    size_t t,
                                    double *out);

/**
 * Writes `log S(x)` to `out_log_score` (if non-null) and its gradient in
 * `x` to `out_grad`, which must hold `dim` values.
 *
 * # Safety
 * `x` and `out_grad` must hold `dim` values.
 */
enum PcdStatus pcd_classifier_log_score_grad(const struct PcdClassifier *clf,
                                             const double *x,
                                             size_t dim,
                                             size_t t,
                                             double *out_grad,
                                             double *out_log_score);

/**
 * Draws `n` samples into `out` (row-major, `n * data_dim` values).
 *
 * A null `clf` gives plain DDPM samples and ignores `guidance`. Output is
 * identical for any `threads`; 0 or 1 runs on the calling thread. `out_resamples`, when
 * non-null, receives the total number of inversion retries.
 *
 * # Safety
 * `out` must hold `out_len` values; `guidance` may be null for defaults.
 */
enum PcdStatus pcd_sample(const struct PcdDiffusion *model,
                          const struct PcdClassifier *clf,
                          const struct PcdGuidance *guidance,
                          uint64_t seed,
                          size_t n,
                          size_t threads,
                          double *out,
                          size_t out_len,
                          size_t *out_resamples);

/**
 * Runs a verification suite (`theorem1`, `theorem2`, `theorem3`,
 * `gradcheck` or `all`) and stores a JSON report in `out_json`, to be
 * released with [`pcd_string_free`]. Returns `VerifyFailed` (with the
 * report still written) when a check misses its tolerance.
 *
 * # Safety
 * `suite` must be a NUL-terminated string and `out_json` writable.
 */
enum PcdStatus pcd_verify(const char *suite, uint64_t seed, char **out_json);

/**
 * # Safety
 * `s` must come from this library. Null is a no-op.
 */
void pcd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PCDIFF_H */

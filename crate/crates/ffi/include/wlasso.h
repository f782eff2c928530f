#ifndef WLASSO_H
#define WLASSO_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum WlassoStatus {
  WLASSO_STATUS_OK = 0,
  WLASSO_STATUS_NULL_POINTER = 1,
  WLASSO_STATUS_INVALID_ARGUMENT = 2,
  WLASSO_STATUS_DIMENSION_MISMATCH = 3,
  WLASSO_STATUS_DEGENERATE_COLUMN = 4,
  WLASSO_STATUS_SINGULAR_DESIGN = 5,
  WLASSO_STATUS_REGIME_VIOLATION = 6,
  WLASSO_STATUS_GUARD_EXCEEDED = 7,
  WLASSO_STATUS_CONFIG_ERROR = 8,
  WLASSO_STATUS_IO_ERROR = 9,
  /**
   * The caller's buffer length does not match the problem dimension.
   */
  WLASSO_STATUS_BUFFER_SIZE = 10,
  /**
   * The requested quantity needs the true signal, which this problem lacks.
   */
  WLASSO_STATUS_MISSING_SIGNAL = 11,
  WLASSO_STATUS_PANIC = 12,
} WlassoStatus;

/**
 * Weight family; passed across the ABI as a `uint32_t`.
 */
typedef enum WlassoWeightKind {
  WLASSO_WEIGHT_KIND_CONSTANT = 0,
  WLASSO_WEIGHT_KIND_NONCONSTANT = 1,
  /**
   * Needs the true signal; only for simulated problems.
   */
  WLASSO_WEIGHT_KIND_ORACLE = 2,
} WlassoWeightKind;

/**
 * Opaque problem handle: design, observations and surrogate pair.
 */
typedef struct WlassoProblem WlassoProblem;

/**
 * Summary of one solve.
 */
typedef struct WlassoSolveInfo {
  size_t iterations;
  double kkt_residual;
  double objective;
  bool converged;
  /**
   * Number of coordinates with magnitude above the support threshold.
   */
  size_t support_size;
} WlassoSolveInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Simulates a random-convolution problem on a circle of `p` positions with
 * `m` parents and an `s`-sparse signal of ℓ1 norm `target_l1`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum WlassoStatus wlasso_problem_simulate_convolution(size_t p,
                                                      uint64_t m,
                                                      size_t s,
                                                      double target_l1,
                                                      uint64_t seed,
                                                      struct WlassoProblem **out);

/**
 * Simulates a Bernoulli(`q`) sensing problem with `n` measurements.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum WlassoStatus wlasso_problem_simulate_bernoulli(size_t n,
                                                    size_t p,
                                                    double q,
                                                    size_t s,
                                                    double target_l1,
                                                    uint64_t seed,
                                                    struct WlassoProblem **out);

/**
 * Convolution problem from observed parent counts (length `p`) and photon
 * counts `y` (length `p`). `x_star` may be null; when given it has length
 * `p` and enables oracle weights.
 *
 * # Safety
 * Non-null pointers must reference arrays of length `p`; `out` must be
 * writable.
 */
enum WlassoStatus wlasso_problem_from_counts(const uint64_t *counts,
                                             size_t p,
                                             const double *y,
                                             const double *x_star,
                                             struct WlassoProblem **out);

/**
 * Bernoulli problem from a row-major `n × p` matrix of 0/1 bytes and
 * counts `y` (length `n`). `x_star` may be null.
 *
 * # Safety
 * `a` must reference `n·p` bytes, `y` `n` values and `x_star` (if
 * non-null) `p` values; `out` must be writable.
 */
enum WlassoStatus wlasso_problem_from_bernoulli(const uint8_t *a,
                                                size_t n,
                                                size_t p,
                                                double q,
                                                const double *y,
                                                const double *x_star,
                                                struct WlassoProblem **out);

/**
 * Releases a problem handle. Null is ignored.
 *
 * # Safety
 * `problem` must be null or a handle from a `wlasso_problem_*` constructor
 * that has not been freed.
 */
void wlasso_problem_free(struct WlassoProblem *problem);

/**
 * Signal dimension `p`, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t wlasso_problem_dim(const struct WlassoProblem *problem);

/**
 * Copies the true signal into `out` (length `p`).
 *
 * # Safety
 * `problem` must be a live handle and `out` writable for `len` values.
 */
enum WlassoStatus wlasso_problem_signal(const struct WlassoProblem *problem,
                                        double *out,
                                        size_t len);

/**
 * Writes the weight vector of the given kind (a [`WlassoWeightKind`]
 * value) into `out` (length `p`).
 * A non-positive `theta` selects the model's default tail parameter.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable for `len` values.
 */
enum WlassoStatus wlasso_weights(const struct WlassoProblem *problem,
                                 uint32_t kind,
                                 double theta,
                                 double *out,
                                 size_t len);

/**
 * Weighted LASSO with weights of `kind` at penalty `gamma`; the estimate
 * goes to `out` (length `p`). `info` may be null.
 *
 * # Safety
 * `problem` must be a live handle, `out` writable for `len` values and
 * `info` null or writable.
 */
enum WlassoStatus wlasso_solve(const struct WlassoProblem *problem,
                               uint32_t kind,
                               double gamma,
                               double *out,
                               size_t len,
                               struct WlassoSolveInfo *info);

/**
 * As [`wlasso_solve`], followed by a least-squares refit on the detected
 * support. `info` describes the first stage except `support_size`.
 *
 * # Safety
 * Same as [`wlasso_solve`].
 */
enum WlassoStatus wlasso_two_step(const struct WlassoProblem *problem,
                                  uint32_t kind,
                                  double gamma,
                                  double *out,
                                  size_t len,
                                  struct WlassoSolveInfo *info);

/**
 * Runs the experiment described by `config` (`key = value` lines) and
 * returns the CSV table in `*csv_out`, to be released with
 * [`wlasso_string_free`].
 *
 * # Safety
 * `config` must be a NUL-terminated string and `csv_out` writable.
 */
enum WlassoStatus wlasso_experiment_csv(const char *config, char **csv_out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from [`wlasso_experiment_csv`] not yet freed.
 */
void wlasso_string_free(char *s);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call into the library from this thread.
 */
const char *wlasso_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wlasso_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WLASSO_H */

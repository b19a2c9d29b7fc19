/* C interface of the ccsgp Gaussian-process system-identification library. */

#ifndef CCSGP_H
#define CCSGP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of a C API call.
 */
typedef enum CcsgpStatus {
  CcsgpStatus_Ok = 0,
  /**
   * A pointer argument was null.
   */
  CcsgpStatus_NullPointer = 1,
  /**
   * Dimensions, lengths, or values were malformed.
   */
  CcsgpStatus_InvalidInput = 2,
  /**
   * Covariance factorization failed at every rescue level.
   */
  CcsgpStatus_NotPositiveDefinite = 3,
  /**
   * A numerical contract was violated during a query.
   */
  CcsgpStatus_NumericalError = 4,
  /**
   * Hyperparameter search produced no usable candidate.
   */
  CcsgpStatus_FitFailed = 5,
  /**
   * Simulated or fitted dynamics produced non-finite values.
   */
  CcsgpStatus_Divergence = 6,
  /**
   * Any other library error.
   */
  CcsgpStatus_OtherError = 7,
  /**
   * A panic was caught at the ABI boundary.
   */
  CcsgpStatus_Panic = 8,
} CcsgpStatus;

/**
 * Which estimator `ccsgp_fit` trains.
 */
typedef enum CcsgpMethod {
  /**
   * Standard GP regression, inputs treated as noise-free.
   */
  CcsgpMethod_St = 0,
  /**
   * Noisy-input GP with slope-propagated input noise.
   */
  CcsgpMethod_Ni = 1,
  /**
   * Consecutive-sample covariance estimator.
   */
  CcsgpMethod_Ccs = 2,
} CcsgpMethod;

/**
 * Opaque fitted model handle.
 */
typedef struct CcsgpModel CcsgpModel;

/**
 * Fit budget and random seed; obtain defaults from
 * `ccsgp_fit_options_default` and override selectively.
 */
typedef struct CcsgpFitOptions {
  /**
   * Slope/hyperparameter alternation rounds (NI and CCS).
   */
  uintptr_t iterations;
  /**
   * Random restarts per optimization round.
   */
  uintptr_t n_starts;
  /**
   * Simplex iteration cap per start.
   */
  uintptr_t max_opt_iters;
  /**
   * Convergence tolerance on the objective spread.
   */
  double tol;
  /**
   * Seed for the optimizer's restart perturbations.
   */
  uint64_t seed;
  /**
   * Nonzero to pin the process noise variance at `process_var`.
   */
  int32_t fix_process_var;
  double process_var;
  /**
   * Nonzero to pin the measurement noise variance at `measurement_var`.
   */
  int32_t fix_measurement_var;
  double measurement_var;
} CcsgpFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Fill `out` with the library's default fit options.
 *
 * # Safety
 * `out` must point to writable memory for one `CcsgpFitOptions`.
 */
enum CcsgpStatus ccsgp_fit_options_default(struct CcsgpFitOptions *out);

/**
 * Fit a one-step dynamics model on measured trajectories.
 *
 * `states` holds all trajectories concatenated, sample-major: trajectory k
 * contributes `lengths[k] * state_dim` doubles. On success, `*out` owns the
 * fitted model and must be released with `ccsgp_model_free`.
 *
 * # Safety
 * `states` must hold `sum(lengths) * state_dim` readable doubles,
 * `lengths` must hold `n_trajectories` readable entries, and `out` must be
 * writable. `options` may be null for defaults.
 */
enum CcsgpStatus ccsgp_fit(const double *states,
                           uintptr_t n_trajectories,
                           const uintptr_t *lengths,
                           uintptr_t state_dim,
                           enum CcsgpMethod method,
                           const struct CcsgpFitOptions *options,
                           struct CcsgpModel **out);

/**
 * Posterior mean, and optionally the posterior covariance, at one query
 * point. `mean_out` receives `state_dim` values; `cov_out`, when non-null,
 * receives `state_dim * state_dim` values row-major (ST and NI models are
 * per-component, so their covariance is diagonal).
 *
 * # Safety
 * `model` must come from a successful `ccsgp_fit`; `x` must hold
 * `state_dim` readable doubles; `mean_out` must be writable for
 * `state_dim` doubles and `cov_out` for `state_dim * state_dim` when
 * non-null.
 */
enum CcsgpStatus ccsgp_predict(const struct CcsgpModel *model,
                               const double *x,
                               double *mean_out,
                               double *cov_out);

/**
 * State dimension of a fitted model, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from a successful `ccsgp_fit`.
 */
uintptr_t ccsgp_model_state_dim(const struct CcsgpModel *model);

/**
 * Release a fitted model. Null is accepted and ignored.
 *
 * # Safety
 * `model` must be null or an owned pointer from `ccsgp_fit`, released at
 * most once.
 */
void ccsgp_model_free(struct CcsgpModel *model);

/**
 * Static description of a status code.
 */
const char *ccsgp_strerror(enum CcsgpStatus status);

/**
 * Detail message of the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ccsgp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ccsgp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CCSGP_H */

#ifndef WFVI_H
#define WFVI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define WFVI_METHOD_KLD 0

#define WFVI_METHOD_FDR 1

#define WFVI_METHOD_SDR 2

#define WFVI_METHOD_FDB 3

#define WFVI_METHOD_SDB 4

#define WFVI_METHOD_BAM 5

#define WFVI_STOP_PLATEAU 0

#define WFVI_STOP_MAX_ITER 1

typedef enum WfviStatus {
  WFVI_STATUS_OK = 0,
  WFVI_STATUS_NULL_POINTER = 1,
  WFVI_STATUS_INVALID_INPUT = 2,
  WFVI_STATUS_DIMENSION_MISMATCH = 3,
  WFVI_STATUS_NOT_POSITIVE_DEFINITE = 4,
  /**
   * Singular factor, non-finite value or ill-conditioned update.
   */
  WFVI_STATUS_NUMERICAL = 5,
  WFVI_STATUS_NO_CONVERGENCE = 6,
  WFVI_STATUS_IO = 7,
  WFVI_STATUS_PARSE = 8,
  /**
   * The buffer passed in is shorter than the result.
   */
  WFVI_STATUS_BUFFER_TOO_SMALL = 9,
  WFVI_STATUS_PANIC = 10,
} WfviStatus;

/**
 * Fitted variational Gaussian handle.
 */
typedef struct WfviFit WfviFit;

/**
 * Target density handle.
 */
typedef struct WfviModel WfviModel;

/**
 * Optimizer settings. Fill with [`wfvi_fit_options_default`] and adjust.
 */
typedef struct WfviFitOptions {
  /**
   * One of the `WFVI_METHOD_*` constants.
   */
  uint32_t method;
  uint64_t seed;
  size_t batch_size;
  size_t max_iter;
  /**
   * Iterations per lower-bound average.
   */
  size_t window;
  double adadelta_decay;
  double adadelta_eps;
  double init_mu;
  double init_t;
  bool use_stopping_rule;
} WfviFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null if none has
 * failed. The pointer stays valid until the next failing call on the
 * same thread.
 */
const char *wfvi_last_error_message(void);

/**
 * Gaussian target N(ν, Λ⁻¹) given ν (length `dim`) and the precision Λ.
 *
 * # Safety
 * `nu` must point to `dim` doubles, `lambda` to `dim * dim`, and `out` must
 * be writable. The handle written to `out` is released with
 * [`wfvi_model_free`].
 */
enum WfviStatus wfvi_model_gaussian_new(size_t dim,
                                        const double *nu,
                                        const double *lambda,
                                        struct WfviModel **out);

/**
 * Bayesian logistic regression with labels in {0, 1}, an `n × dim`
 * design and a N(0, σ₀²I) prior on the coefficients.
 *
 * # Safety
 * `x` must point to `n * dim` doubles, `y` to `n`, and `out` must be
 * writable. Release the handle with [`wfvi_model_free`].
 */
enum WfviStatus wfvi_model_logistic_new(size_t n,
                                        size_t dim,
                                        const double *x,
                                        const double *y,
                                        double sigma0_sq,
                                        struct WfviModel **out);

/**
 * # Safety
 * `model` must be a live handle or null.
 */
size_t wfvi_model_dim(const struct WfviModel *model);

/**
 * # Safety
 * `model` must come from a `wfvi_model_*_new` call and not be used again.
 * Null is ignored.
 */
void wfvi_model_free(struct WfviModel *model);

/**
 * Library defaults for `method` (a `WFVI_METHOD_*` code).
 *
 * # Safety
 * `out` must be writable.
 */
enum WfviStatus wfvi_fit_options_default(uint32_t method,
                                         uint64_t seed,
                                         struct WfviFitOptions *out);

/**
 * Fits a Gaussian approximation to `model`. The same model and options
 * always give the same fit.
 *
 * # Safety
 * `model` must be a live handle, `options` readable and `out` writable.
 * Release the fit with [`wfvi_fit_free`].
 */
enum WfviStatus wfvi_fit_run(const struct WfviModel *model,
                             const struct WfviFitOptions *options,
                             struct WfviFit **out);

/**
 * Rebuilds a fit from the JSON produced by [`wfvi_fit_to_json`].
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum WfviStatus wfvi_fit_from_json(const char *json, struct WfviFit **out);

/**
 * # Safety
 * `fit` must be a live handle or null.
 */
size_t wfvi_fit_dim(const struct WfviFit *fit);

/**
 * Iterations run, stop reason (`WFVI_STOP_*`), rejected steps, method code
 * and the last lower-bound average. Any output pointer may be null.
 *
 * # Safety
 * `fit` must be a live handle; non-null outputs must be writable.
 */
enum WfviStatus wfvi_fit_summary(const struct WfviFit *fit,
                                 size_t *iterations,
                                 uint32_t *stop_reason,
                                 size_t *rejected_steps,
                                 uint32_t *method,
                                 double *lower_bound);

/**
 * Copies the variational mean into `buf`, which must hold `dim` values.
 *
 * # Safety
 * `fit` must be a live handle and `buf` writable for `len` doubles.
 */
enum WfviStatus wfvi_fit_mean(const struct WfviFit *fit, double *buf, size_t len);

/**
 * Copies the dense covariance Σ = (TTᵀ)⁻¹, row-major, into `buf`, which
 * must hold `dim * dim` values.
 *
 * # Safety
 * `fit` must be a live handle and `buf` writable for `len` doubles.
 */
enum WfviStatus wfvi_fit_covariance(const struct WfviFit *fit, double *buf, size_t len);

/**
 * Serializes the fit as JSON. Free the string with [`wfvi_string_free`].
 *
 * # Safety
 * `fit` must be a live handle and `out` writable.
 */
enum WfviStatus wfvi_fit_to_json(const struct WfviFit *fit, char **out);

/**
 * # Safety
 * `fit` must come from `wfvi_fit_run` or `wfvi_fit_from_json` and not be
 * used again. Null is ignored.
 */
void wfvi_fit_free(struct WfviFit *fit);

/**
 * # Safety
 * `s` must come from this library and not be used again. Null is ignored.
 */
void wfvi_string_free(char *s);

/**
 * Closed-form weighted Fisher divergence E_q ‖∇log q − ∇log p‖²_M between
 * q = N(μ, Σ) and p = N(ν, Λ⁻¹).
 *
 * # Safety
 * `mu` and `nu` must point to `dim` doubles; `sigma`, `lambda` and `m` to
 * `dim * dim`; `out` must be writable.
 */
enum WfviStatus wfvi_weighted_fd_gaussians(size_t dim,
                                           const double *mu,
                                           const double *sigma,
                                           const double *nu,
                                           const double *lambda,
                                           const double *m,
                                           double *out);

/**
 * M* = −log(MMD²_u + 10⁻⁵) between the rows of `x` and `y`, both
 * `n × dim`, under an RBF kernel of bandwidth `h`.
 *
 * # Safety
 * `x` and `y` must point to `n * dim` doubles and `out` must be writable.
 */
enum WfviStatus wfvi_mmd_mstar(size_t n,
                               size_t dim,
                               const double *x,
                               const double *y,
                               double h,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WFVI_H */

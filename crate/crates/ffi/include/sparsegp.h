#ifndef SPARSEGP_H
#define SPARSEGP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Codes 2-4 match the command-line exit
 * statuses.
 */
typedef enum SgpStatus {
  SGP_STATUS_OK = 0,
  SGP_STATUS_NULL_POINTER = 1,
  SGP_STATUS_CONFIG = 2,
  SGP_STATUS_DATA = 3,
  SGP_STATUS_NUMERICAL = 4,
  SGP_STATUS_PANIC = 5,
} SgpStatus;

/**
 * Covariance hyperparameters.
 */
typedef struct SgpKernel SgpKernel;

/**
 * Sparse symmetric matrix in CSR form.
 */
typedef struct SgpMatrix SgpMatrix;

/**
 * Posterior draws together with the data they were fitted to.
 */
typedef struct SgpPosterior SgpPosterior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Owned by the
 * library; valid until the next failing call on this thread.
 */
const char *sgp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sgp_version(void);

/**
 * Parses hyperparameters from their JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum SgpStatus sgp_kernel_new(const char *json, struct SgpKernel **out);

/**
 * # Safety
 * `kernel` must come from `sgp_kernel_new` and not be used afterwards.
 */
void sgp_kernel_free(struct SgpKernel *kernel);

/**
 * `C_y(x, x2)` for two `dim`-dimensional points.
 *
 * # Safety
 * `x` and `x2` must each hold `dim` values; `out` must be writable.
 */
enum SgpStatus sgp_kernel_eval(const struct SgpKernel *kernel,
                               size_t dim,
                               const double *x,
                               const double *x2,
                               double *out);

/**
 * Assembles the covariance at `n` points stored row-major in `coords`,
 * with the noise variance on the diagonal when `include_noise` is nonzero.
 *
 * # Safety
 * `coords` must hold `n * dim` values; `out` must be writable.
 */
enum SgpStatus sgp_kernel_assemble(const struct SgpKernel *kernel,
                                   size_t n,
                                   size_t dim,
                                   const double *coords,
                                   int32_t include_noise,
                                   size_t workers,
                                   struct SgpMatrix **out);

/**
 * # Safety
 * `matrix` must come from this library and not be used afterwards.
 */
void sgp_matrix_free(struct SgpMatrix *matrix);

/**
 * Order of the matrix; 0 for a null handle.
 *
 * # Safety
 * `matrix` must be null or a live handle.
 */
size_t sgp_matrix_dim(const struct SgpMatrix *matrix);

/**
 * Stored entries (both triangles); 0 for a null handle.
 *
 * # Safety
 * `matrix` must be null or a live handle.
 */
size_t sgp_matrix_nnz(const struct SgpMatrix *matrix);

/**
 * Copies the CSR arrays: `row_offsets` needs `dim + 1` slots, `cols` and
 * `values` need `nnz` slots each.
 *
 * # Safety
 * The buffers must have the sizes above.
 */
enum SgpStatus sgp_matrix_csr(const struct SgpMatrix *matrix,
                              size_t *row_offsets,
                              size_t *cols,
                              double *values);

/**
 * Solves `A x = rhs` by MINRES to relative residual `tol`.
 *
 * # Safety
 * `rhs` and `x` must each hold `dim` values.
 */
enum SgpStatus sgp_matrix_solve(const struct SgpMatrix *matrix,
                                const double *rhs,
                                double tol,
                                double *x);

/**
 * Fits the model described by `config_toml` (the same document the
 * command-line tool reads; null for defaults) to `n` observations `z` at
 * row-major `coords`, with a constant prior mean.
 *
 * # Safety
 * `coords` must hold `n * dim` values and `z` `n` values.
 */
enum SgpStatus sgp_fit(size_t n,
                       size_t dim,
                       const double *coords,
                       const double *z,
                       const char *config_toml,
                       uint64_t seed,
                       struct SgpPosterior **out);

/**
 * # Safety
 * `posterior` must come from `sgp_fit` and not be used afterwards.
 */
void sgp_posterior_free(struct SgpPosterior *posterior);

/**
 * Retained (post burn-in) draws; 0 for a null handle.
 *
 * # Safety
 * `posterior` must be null or a live handle.
 */
size_t sgp_posterior_len(const struct SgpPosterior *posterior);

/**
 * Number of bumps, `n1 * n2`; 0 without a sparse factor.
 *
 * # Safety
 * `posterior` must be null or a live handle.
 */
size_t sgp_posterior_bumps(const struct SgpPosterior *posterior);

/**
 * Share of retained draws with each bump switched on.
 *
 * # Safety
 * `out` must hold `sgp_posterior_bumps(posterior)` values.
 */
enum SgpStatus sgp_posterior_inclusion(const struct SgpPosterior *posterior, double *out);

/**
 * Posterior predictive mean and standard deviation of the latent process
 * at `m` query points, using at most `max_draws` evenly spaced draws (0 for
 * all).
 *
 * # Safety
 * `coords` must hold `m * dim` values with `dim` the fitted dimension;
 * `mean` and `sd` must hold `m` values.
 */
enum SgpStatus sgp_posterior_predict(const struct SgpPosterior *posterior,
                                     size_t m,
                                     const double *coords,
                                     size_t max_draws,
                                     double *mean,
                                     double *sd);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSEGP_H */

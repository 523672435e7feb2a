#ifndef GASG_H
#define GASG_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  GASG_STATUS_OK = 0,
  GASG_STATUS_NULL_POINTER = 1,
  /**
   * Bad parameter values or sizes.
   */
  GASG_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed or incompatible input data.
   */
  GASG_STATUS_DATA_ERROR = 3,
  /**
   * The computation could not proceed (e.g. every column unusable).
   */
  GASG_STATUS_NUMERICAL_ERROR = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  GASG_STATUS_PANIC = 5,
} GasgStatus;

/**
 * Result of feeding one column to a streaming recovery.
 */
typedef enum {
  GASG_OUTCOME_UPDATED = 0,
  /**
   * Column already lies in the subspace; nothing moved.
   */
  GASG_OUTCOME_DEGENERATE = 1,
  /**
   * Column could not be fit (zero norm or too few observed rows).
   */
  GASG_OUTCOME_UNUSABLE = 2,
} GasgOutcome;

/**
 * Streaming recovery state.
 */
typedef struct GasgRecovery GasgRecovery;

/**
 * Orthonormal basis of a subspace.
 */
typedef struct GasgSubspace GasgSubspace;

/**
 * Adaptive step-size parameters. Obtain defaults from
 * [`gasg_step_params_default`].
 */
typedef struct {
  double eta0;
  double mu_min;
  double mu_max;
  double f_min;
  double f_max;
  double omega;
} GasgStepParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or an empty string.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *gasg_last_error(void);

GasgStepParams gasg_step_params_default(void);

/**
 * Random subspace drawn from `seed`, identical to the initialization used
 * by [`gasg_recover_dense`] with the same seed.
 *
 * # Safety
 * `out` must be valid for a write.
 */
GasgStatus gasg_subspace_random(size_t n, size_t d, uint64_t seed, GasgSubspace **out);

/**
 * Subspace spanned by the `n x d` column-major `basis`. Columns are
 * orthonormalized when they are not already orthonormal.
 *
 * # Safety
 * `basis` must point to `n * d` doubles and `out` must be valid for a write.
 */
GasgStatus gasg_subspace_from_basis(const double *basis, size_t n, size_t d, GasgSubspace **out);

/**
 * # Safety
 * `s` must be a live handle; `n` and `d` null or valid for a write.
 */
GasgStatus gasg_subspace_dims(const GasgSubspace *s, size_t *n, size_t *d);

/**
 * Copies the basis into `out` (column-major, `len >= n * d`).
 *
 * # Safety
 * `s` must be a live handle and `out` valid for `len` doubles.
 */
GasgStatus gasg_subspace_basis(const GasgSubspace *s, double *out, size_t len);

/**
 * # Safety
 * `s` must be null or a handle not yet freed.
 */
void gasg_subspace_free(GasgSubspace *s);

/**
 * Largest principal angle between two subspaces of equal shape, in radians.
 *
 * # Safety
 * Handles must be live and `out` valid for a write.
 */
GasgStatus gasg_principal_angle(const GasgSubspace *a, const GasgSubspace *b, double *out);

/**
 * Streaming recovery starting from a copy of `initial` with the adaptive
 * step rule. `params` may be null for defaults.
 *
 * # Safety
 * `initial` must be live, `params` null or valid, `out` valid for a write.
 */
GasgStatus gasg_recovery_new(const GasgSubspace *initial,
                             const GasgStepParams *params,
                             GasgRecovery **out);

/**
 * Feeds one partially observed column: `values[i]` is the entry in row
 * `rows[i]`. Rows must be strictly increasing. `outcome` and `residual`
 * may be null; `residual` receives the fit residual before the update
 * (NaN for unusable columns).
 *
 * # Safety
 * `r` must be live; `rows` and `values` valid for `len` elements.
 */
GasgStatus gasg_recovery_push(GasgRecovery *r,
                              const size_t *rows,
                              const double *values,
                              size_t len,
                              GasgOutcome *outcome,
                              double *residual);

/**
 * Copy of the current estimate as a new subspace handle.
 *
 * # Safety
 * `r` must be live and `out` valid for a write.
 */
GasgStatus gasg_recovery_subspace(const GasgRecovery *r, GasgSubspace **out);

/**
 * Number of columns pushed so far.
 *
 * # Safety
 * `r` must be live and `out` valid for a write.
 */
GasgStatus gasg_recovery_iterations(const GasgRecovery *r, uint64_t *out);

/**
 * # Safety
 * `r` must be null or a handle not yet freed.
 */
void gasg_recovery_free(GasgRecovery *r);

/**
 * Batch recovery of a rank-`d` subspace from an `n x m` column-major
 * matrix. `mask` (same layout, nonzero = observed) may be null for full
 * observation; `params` may be null for defaults. Columns are drawn
 * uniformly at random for `iterations` steps from the generator seeded
 * with `seed`.
 *
 * # Safety
 * `data` must hold `n * m` doubles, `mask` null or `n * m` bytes, `params`
 * null or valid, `out` valid for a write.
 */
GasgStatus gasg_recover_dense(const double *data,
                              const uint8_t *mask,
                              size_t n,
                              size_t m,
                              size_t d,
                              uint64_t iterations,
                              uint64_t seed,
                              const GasgStepParams *params,
                              GasgSubspace **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GASG_H */

#ifndef QN_H
#define QN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QnLineSearch {
  QN_LINE_SEARCH_WOLFE = 0,
  QN_LINE_SEARCH_NEAR_EXACT = 1,
} QnLineSearch;

typedef enum QnOutcome {
  QN_OUTCOME_CONVERGED = 0,
  QN_OUTCOME_MAX_ITER = 1,
  QN_OUTCOME_LINE_SEARCH_FAILURE = 2,
} QnOutcome;

/**
 * Result code of every fallible call.
 */
typedef enum QnStatus {
  QN_STATUS_OK = 0,
  QN_STATUS_NULL_POINTER = 1,
  QN_STATUS_INVALID_ARGUMENT = 2,
  QN_STATUS_PARSE = 3,
  QN_STATUS_DIMENSION_MISMATCH = 4,
  QN_STATUS_NOT_POSITIVE_DEFINITE = 5,
  QN_STATUS_CURVATURE_VIOLATION = 6,
  /**
   * Scale equation, line search or evaluation failure.
   */
  QN_STATUS_NUMERICAL = 7,
  QN_STATUS_UNSUPPORTED = 8,
  /**
   * A Rust panic was caught at the boundary.
   */
  QN_STATUS_INTERNAL = 9,
} QnStatus;

/**
 * Opaque potential function.
 */
typedef struct QnPotential QnPotential;

/**
 * Opaque symmetric positive definite matrix, held as its Cholesky factor.
 */
typedef struct QnSpd QnSpd;

typedef struct QnSolveOptions {
  enum QnLineSearch line_search;
  /**
   * Step noise level `h`; zero disables the perturbation.
   */
  double noise;
  uint64_t seed;
  size_t max_iter;
  /**
   * Non-positive means `n * 1e-5`.
   */
  double grad_tol;
} QnSolveOptions;

typedef struct QnSolveSummary {
  enum QnOutcome outcome;
  size_t iterations;
  double f;
  double grad_norm;
} QnSolveSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the message of the last failed call on this thread into `buf`
 * (NUL-terminated, truncated to `len`). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t qn_last_error(char *buf, size_t len);

/**
 * Static, NUL-terminated version string.
 */
const char *qn_version(void);

/**
 * Parses `neglog`, `power:gamma=<g>` or `bounded:a=<a>,b=<b>`.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum QnStatus qn_potential_parse(const char *text, struct QnPotential **out);

/**
 * # Safety
 * `p` must be null or a handle from `qn_potential_parse`, freed once.
 */
void qn_potential_free(struct QnPotential *p);

/**
 * `nu(z) = -z V'(z)` and `beta(z) = z nu'(z) / nu(z)`.
 *
 * # Safety
 * `p` must be a valid handle; `nu` and `beta` may be null.
 */
enum QnStatus qn_potential_eval(const struct QnPotential *p, double z, double *nu, double *beta);

/**
 * Checks the potential conditions for dimension `n` on the default grid.
 * `passed` receives 1 or 0.
 *
 * # Safety
 * `p` and `passed` must be valid pointers.
 */
enum QnStatus qn_potential_validate(const struct QnPotential *p, size_t n, int32_t *passed);

/**
 * Factors the row-major `n * n` matrix `a`.
 *
 * # Safety
 * `a` must point to `n * n` doubles and `out` be a valid pointer.
 */
enum QnStatus qn_spd_from_dense(size_t n, const double *a, struct QnSpd **out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum QnStatus qn_spd_identity(size_t n, struct QnSpd **out);

/**
 * # Safety
 * `m` must be null or a handle from this library, freed once.
 */
void qn_spd_free(struct QnSpd *m);

/**
 * Dimension of `m`, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a valid handle.
 */
size_t qn_spd_dim(const struct QnSpd *m);

/**
 * # Safety
 * `m` and `out` must be valid pointers.
 */
enum QnStatus qn_spd_logdet(const struct QnSpd *m, double *out);

/**
 * Writes the dense matrix into `out` (`len` must be at least `n * n`).
 *
 * # Safety
 * `m` must be a valid handle and `out` point to `len` writable doubles.
 */
enum QnStatus qn_spd_to_dense(const struct QnSpd *m, double *out, size_t len);

/**
 * One quasi-Newton update of `state` (B for `-b` families, H for `-h`
 * families) with the secant pair `(s, y)`. `theta` receives the scale of
 * the BFGS-type part, or NaN for Broyden mixtures; it may be null.
 *
 * # Safety
 * Pointers must be valid; `s` and `y` point to `dim(state)` doubles.
 */
enum QnStatus qn_update(const char *family_name,
                        const struct QnPotential *potential,
                        const struct QnSpd *state,
                        const double *s,
                        const double *y,
                        struct QnSpd **out,
                        double *theta);

/**
 * Closed-form influence of the perturbation `((1 + eps) s, y + eps ybar)`
 * at `eps = 0`, written row-major into `out` (`n * n` doubles).
 *
 * # Safety
 * Pointers must be valid; vectors have `dim(state)` entries.
 */
enum QnStatus qn_influence(const char *family_name,
                           const struct QnPotential *potential,
                           const struct QnSpd *state,
                           const double *s,
                           const double *y,
                           const double *y_bar,
                           double *out);

/**
 * Defaults: Wolfe search, no noise, seed 0, 50000 iterations, `n * 1e-5`.
 */
struct QnSolveOptions qn_solve_options_default(void);

/**
 * Minimizes the built-in problem `p1` or `p2` of dimension `n` from `x0`.
 * The final iterate goes to `x_out` (`n` doubles). A run that stops
 * without converging still returns `Ok`; check `summary.outcome`.
 *
 * # Safety
 * Pointers must be valid; `options` may be null for the defaults.
 */
enum QnStatus qn_minimize(const char *problem,
                          size_t n,
                          const char *family_name,
                          const struct QnPotential *potential,
                          const double *x0,
                          const struct QnSolveOptions *options,
                          double *x_out,
                          struct QnSolveSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QN_H */

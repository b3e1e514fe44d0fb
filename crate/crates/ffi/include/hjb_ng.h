#ifndef HJB_NG_H
#define HJB_NG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Rate mode selector: divide by the integrated mass entry.
 */
#define HJB_MODE_ORACLE 0

/**
 * Rate mode selector: keep the single-coordinate mass entry `alpha^2 / 4`.
 */
#define HJB_MODE_PAPER 1

/**
 * Result code of every fallible call.
 */
typedef enum HjbStatus {
  HJB_STATUS_OK = 0,
  HJB_STATUS_NULL_POINTER = 1,
  HJB_STATUS_INVALID_PARAMS = 2,
  HJB_STATUS_SINGULAR_HESSIAN = 3,
  HJB_STATUS_CONVERGENCE_FAILURE = 4,
  HJB_STATUS_NOT_POSITIVE_DEFINITE = 5,
  HJB_STATUS_CFL_VIOLATION = 6,
  HJB_STATUS_NON_POSITIVE_FIELD = 7,
  HJB_STATUS_DOMAIN_MISMATCH = 8,
  HJB_STATUS_INVALID_BRANCH = 9,
  HJB_STATUS_NO_SIGN_CHANGE = 10,
  HJB_STATUS_BUFFER_TOO_SMALL = 11,
  HJB_STATUS_PANIC = 12,
} HjbStatus;

/**
 * Opaque finite-difference solution.
 */
typedef struct HjbField HjbField;

/**
 * Opaque validated market parameters.
 */
typedef struct HjbParams HjbParams;

/**
 * Plain-data description of a market, used to build an `HjbParams`.
 */
typedef struct HjbMarket {
  double r;
  double lambda;
  double gamma;
  double a0;
  double b0;
  double rho;
  uint32_t n;
  double k;
  double horizon;
} HjbMarket;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code. Never returns NULL; unknown codes
 * map to "unknown status".
 */
const char *hjb_status_message(int32_t status);

/**
 * Validate `market` and store a new handle in `*out`.
 *
 * # Safety
 * `market` must point to a valid `HjbMarket`; `out` must be writable.
 */
enum HjbStatus hjb_params_new(const struct HjbMarket *market, struct HjbParams **out);

/**
 * Reference parameter set with `n` non-tradables.
 *
 * # Safety
 * `out` must be writable.
 */
enum HjbStatus hjb_params_reference(uint32_t n, struct HjbParams **out);

/**
 * Copy the parameters behind a handle into `*out`.
 *
 * # Safety
 * `params` must be a live handle or NULL; `out` must be writable.
 */
enum HjbStatus hjb_params_get(const struct HjbParams *params, struct HjbMarket *out);

/**
 * Release a handle from `hjb_params_new` or `hjb_params_reference`.
 *
 * # Safety
 * `params` must be NULL or a handle not yet freed.
 */
void hjb_params_free(struct HjbParams *params);

/**
 * Log-parameter rates. `c_zeta` receives NaN when `n = 0`.
 *
 * # Safety
 * `params` must be a live handle; the three out-pointers must be writable.
 */
enum HjbStatus hjb_rate_constants(const struct HjbParams *params,
                                  uint32_t mode,
                                  double *c_alpha,
                                  double *c_beta,
                                  double *c_zeta);

/**
 * Trial value function `V(t, x, y)`. `y` must have `n` entries.
 *
 * # Safety
 * `params` must be a live handle; `y` must point to `ny` doubles (may be
 * NULL when `ny = 0`); `out` must be writable.
 */
enum HjbStatus hjb_value_function(const struct HjbParams *params,
                                  uint32_t mode,
                                  double t,
                                  double x,
                                  const double *y,
                                  size_t ny,
                                  double *out);

/**
 * Closed-form buyer's indifference price of the handle's `k` forwards.
 *
 * # Safety
 * As for `hjb_value_function`.
 */
enum HjbStatus hjb_indifference_price(const struct HjbParams *params,
                                      uint32_t mode,
                                      double x0,
                                      const double *y0,
                                      size_t ny,
                                      double *out);

/**
 * Explicit finite-difference solve on `[0, edge]^(n+1)` with `2^level + 1`
 * points per axis up to reversed time `horizon`.
 *
 * # Safety
 * `params` must be a live handle; `out` must be writable.
 */
enum HjbStatus hjb_fd_solve(const struct HjbParams *params,
                            uint32_t level,
                            double edge,
                            double horizon,
                            struct HjbField **out);

/**
 * Number of nodes of a field (0 for NULL).
 *
 * # Safety
 * `field` must be NULL or a live handle.
 */
size_t hjb_field_len(const struct HjbField *field);

/**
 * Spatial dimension of a field (0 for NULL).
 *
 * # Safety
 * `field` must be NULL or a live handle.
 */
size_t hjb_field_dim(const struct HjbField *field);

/**
 * Copy all node values (flat order, `x` fastest) into `buf`.
 *
 * # Safety
 * `field` must be a live handle; `buf` must hold `len` doubles.
 */
enum HjbStatus hjb_field_values(const struct HjbField *field, double *buf, size_t len);

/**
 * Coordinates `(x, y_1, ..)` of node `index` into `coords`.
 *
 * # Safety
 * `field` must be a live handle; `coords` must hold `len` doubles.
 */
enum HjbStatus hjb_field_point(const struct HjbField *field,
                               size_t index,
                               double *coords,
                               size_t len);

/**
 * Release a field handle.
 *
 * # Safety
 * `field` must be NULL or a handle not yet freed.
 */
void hjb_field_free(struct HjbField *field);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HJB_NG_H */

#ifndef BERGMAN_H
#define BERGMAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BergmanStatus {
  BERGMAN_STATUS_OK = 0,
  BERGMAN_STATUS_NULL_POINTER = 1,
  BERGMAN_STATUS_INVALID_UTF8 = 2,
  BERGMAN_STATUS_INVALID_ARGUMENT = 3,
  BERGMAN_STATUS_CONFIG_INVALID = 4,
  BERGMAN_STATUS_NOT_REAL_VALUED = 5,
  BERGMAN_STATUS_DEGENERATE = 6,
  BERGMAN_STATUS_GAP_VIOLATION = 7,
  BERGMAN_STATUS_DEGENERATE_HESSIAN = 8,
  BERGMAN_STATUS_CRITICAL_STRUCTURE = 9,
  BERGMAN_STATUS_BAD_CONTOUR = 10,
  BERGMAN_STATUS_INSUFFICIENT_DEGREE = 11,
  BERGMAN_STATUS_QUADRATURE_UNDERRESOLVED = 12,
  BERGMAN_STATUS_DEGENERATE_FIT = 13,
  BERGMAN_STATUS_ILL_CONDITIONED = 14,
  BERGMAN_STATUS_UNSUPPORTED = 15,
  BERGMAN_STATUS_IO = 16,
  BERGMAN_STATUS_SERIES = 17,
  BERGMAN_STATUS_PANIC = 99,
} BergmanStatus;

/**
 * A solved amplitude with its growth estimate.
 */
typedef struct BergmanAmplitude BergmanAmplitude;

/**
 * A realized kernel at fixed `h`.
 */
typedef struct BergmanKernel BergmanKernel;

/**
 * A validated weight with its polarization and phase.
 */
typedef struct BergmanWeight BergmanWeight;

typedef struct BergmanComplex {
  double re;
  double im;
} BergmanComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into the library on this thread.
 */
const char *bergman_last_error_message(void);

/**
 * Static, NUL-terminated version string.
 */
const char *bergman_version(void);

/**
 * Builds a weight `Φ = Σ c_j ξ^{α_j} ξ̄^{β_j}` in displacements from `base`.
 *
 * `exponents` holds `nterms` rows of `2n` entries (`α` then `β`);
 * `base` may be NULL for the origin.
 *
 * # Safety
 * Arrays must hold the stated number of elements; `out` must be writable.
 */
enum BergmanStatus bergman_weight_new(size_t n,
                                      uint32_t maxdeg,
                                      const uint16_t *exponents,
                                      const struct BergmanComplex *coeffs,
                                      size_t nterms,
                                      const struct BergmanComplex *base,
                                      double trust_radius,
                                      struct BergmanWeight **out_weight);

/**
 * Builds the weight described by a run-configuration JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out_weight` must be writable.
 */
enum BergmanStatus bergman_weight_from_config(const char *json, struct BergmanWeight **out_weight);

/**
 * Dimension `n` of the weight, or 0 for NULL.
 *
 * # Safety
 * `w` must be NULL or a live weight handle.
 */
size_t bergman_weight_dim(const struct BergmanWeight *w);

/**
 * `Φ(x)`.
 *
 * # Safety
 * `w` must be a live handle, `x` must hold `n` values, `out_value` writable.
 */
enum BergmanStatus bergman_weight_value(const struct BergmanWeight *w,
                                        const struct BergmanComplex *x,
                                        double *out_value);

/**
 * `Ψ(x, ȳ)`, the polarization evaluated at the conjugate of `y`.
 *
 * # Safety
 * `w` must be a live handle, `x` and `y` must hold `n` values, `out_value` writable.
 */
enum BergmanStatus bergman_weight_polarization(const struct BergmanWeight *w,
                                               const struct BergmanComplex *x,
                                               const struct BergmanComplex *y,
                                               struct BergmanComplex *out_value);

/**
 * # Safety
 * `w` must be NULL or a handle not yet freed.
 */
void bergman_weight_free(struct BergmanWeight *w);

/**
 * Solves `A a = 1` through order `order` and estimates the growth constant
 * on the torus of radius `growth_radius`.
 *
 * # Safety
 * `w` must be a live handle; `out_amplitude` must be writable.
 */
enum BergmanStatus bergman_amplitude_solve(const struct BergmanWeight *w,
                                           size_t order,
                                           double growth_radius,
                                           struct BergmanAmplitude **out_amplitude);

/**
 * Amplitude order `N`, or 0 for NULL.
 *
 * # Safety
 * `a` must be NULL or a live amplitude handle.
 */
size_t bergman_amplitude_order(const struct BergmanAmplitude *a);

/**
 * Estimated growth constant `C`.
 *
 * # Safety
 * `a` must be a live handle; `out_c` writable.
 */
enum BergmanStatus bergman_amplitude_growth_c(const struct BergmanAmplitude *a, double *out_c);

/**
 * `a_k(x, ỹ)`.
 *
 * # Safety
 * `a` must be a live handle, `x` and `yt` must hold `n` values, `out_value` writable.
 */
enum BergmanStatus bergman_amplitude_coeff(const struct BergmanAmplitude *a,
                                           size_t k,
                                           const struct BergmanComplex *x,
                                           const struct BergmanComplex *yt,
                                           struct BergmanComplex *out_value);

/**
 * # Safety
 * `a` must be NULL or a handle not yet freed.
 */
void bergman_amplitude_free(struct BergmanAmplitude *a);

/**
 * Realized kernel `h^{-n} e^{2Ψ/h} Σ_{k<=K} a_k h^k` at the given `h`.
 * The handle does not borrow `w` or `a`.
 *
 * # Safety
 * `w` and `a` must be live handles built from the same weight; `out_kernel` writable.
 */
enum BergmanStatus bergman_kernel_new(const struct BergmanWeight *w,
                                      const struct BergmanAmplitude *a,
                                      double h,
                                      struct BergmanKernel **out_kernel);

/**
 * Realization cutoff `K`, or 0 for NULL.
 *
 * # Safety
 * `k` must be NULL or a live kernel handle.
 */
size_t bergman_kernel_cutoff(const struct BergmanKernel *k);

/**
 * `K(x, ȳ)`.
 *
 * # Safety
 * `k` must be a live handle, `x` and `y` must hold `n` values, `out_value` writable.
 */
enum BergmanStatus bergman_kernel_eval(const struct BergmanKernel *k,
                                       const struct BergmanComplex *x,
                                       const struct BergmanComplex *y,
                                       struct BergmanComplex *out_value);

/**
 * # Safety
 * `k` must be NULL or a handle not yet freed.
 */
void bergman_kernel_free(struct BergmanKernel *k);

/**
 * Runs the suites selected in a configuration and returns the JSON report.
 * Release the string with [`bergman_string_free`].
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out_json` writable.
 */
enum BergmanStatus bergman_run_config(const char *config_json, char **out_json);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void bergman_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BERGMAN_H */

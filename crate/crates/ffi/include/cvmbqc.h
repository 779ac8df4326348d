#ifndef CVMBQC_H
#define CVMBQC_H

/* Generated by cbindgen from cvmbqc-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Named gates of the angle recipes.
 */
typedef enum CvmbqcGate {
  CvmbqcGate_Identity = 0,
  CvmbqcGate_Rotation = 1,
  CvmbqcGate_SqueezeRot = 2,
  CvmbqcGate_Shear = 3,
} CvmbqcGate;

/**
 * Result codes of the C API.
 */
typedef enum CvmbqcStatus {
  CvmbqcStatus_Ok = 0,
  CvmbqcStatus_NullArgument = 1,
  CvmbqcStatus_InvalidArgument = 2,
  CvmbqcStatus_NumericalFailure = 3,
} CvmbqcStatus;

/**
 * Opaque handle: an exactly evaluated repeated-teleportation chain.
 */
typedef struct CvmbqcChain CvmbqcChain;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string of the underlying crate; static storage, do not free.
 */
const char *cvmbqc_version(void);

/**
 * Message of the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread; do not free.
 */
const char *cvmbqc_last_error(void);

/**
 * Evaluate an `n_steps` plain-teleportation chain with the given resource
 * squeezing (dB relative to vacuum, non-positive) and transmissivities.
 * Returns NULL on invalid parameters (see `cvmbqc_last_error`).
 */
struct CvmbqcChain *cvmbqc_chain_new(size_t n_steps,
                                     double squeezing_db_x,
                                     double squeezing_db_p,
                                     double eta_resource,
                                     double eta_detect);

/**
 * Release a chain handle. NULL is accepted.
 *
 * # Safety
 * `chain` must be NULL or a pointer returned by [`cvmbqc_chain_new`] that
 * has not been freed yet.
 */
void cvmbqc_chain_free(struct CvmbqcChain *chain);

/**
 * Covariance of `(x_ref, p_ref, x_out, p_out)` in vacuum units, written as
 * 16 row-major doubles.
 *
 * # Safety
 * `chain` must be a live handle; `cov_out` must point to 16 writable
 * doubles.
 */
enum CvmbqcStatus cvmbqc_chain_moments(const struct CvmbqcChain *chain, double *cov_out);

/**
 * Nullifier variances of the chain (x and p combinations), vacuum units.
 *
 * # Safety
 * `chain` must be a live handle; the out-pointers must be writable.
 */
enum CvmbqcStatus cvmbqc_chain_nullifier_variances(const struct CvmbqcChain *chain,
                                                   double *var_x_out,
                                                   double *var_p_out);

/**
 * Infinite-statistics estimate of the realized chain matrix, 4 row-major
 * doubles; against the logical input when `vs_reference` is false.
 *
 * # Safety
 * `chain` must be a live handle; `s_out` must point to 4 writable doubles.
 */
enum CvmbqcStatus cvmbqc_chain_estimate(const struct CvmbqcChain *chain,
                                        bool vs_reference,
                                        double *s_out);

/**
 * Predicted nullifier variance of an `n`-step chain at the given squeezing
 * level: `(n+1) 10^(db/10)` vacuum units.
 *
 * # Safety
 * Out-pointers must be writable or NULL (skipped).
 */
enum CvmbqcStatus cvmbqc_predict_multistep_variance(size_t n_steps,
                                                    double squeezing_db,
                                                    double *variance_out,
                                                    double *variance_db_out);

/**
 * Separability bound of a named gate's nullifier pair, vacuum units.
 *
 * # Safety
 * `threshold_out` must be writable.
 */
enum CvmbqcStatus cvmbqc_inseparability_threshold(enum CvmbqcGate gate,
                                                  double phi_rad,
                                                  double *threshold_out);

/**
 * The single-step operation induced by measuring at `(theta_a, theta_b)`;
 * 4 row-major doubles. Degenerate pairs are rejected.
 *
 * # Safety
 * `m_out` must point to 4 writable doubles.
 */
enum CvmbqcStatus cvmbqc_step_map(double theta_a_rad, double theta_b_rad, double *m_out);

/**
 * Measurement angles (degrees) realizing a named gate in one step:
 * writes `[theta_a, theta_b]`.
 *
 * # Safety
 * `angles_deg_out` must point to 2 writable doubles.
 */
enum CvmbqcStatus cvmbqc_gate_angles(enum CvmbqcGate gate, double phi_rad, double *angles_deg_out);

/**
 * Compile a det-1 target matrix (4 row-major doubles) into measurement
 * steps. Writes up to `capacity` `(theta_a_deg, theta_b_deg)` pairs into
 * `angles_deg_out` and the number of steps into `steps_out`.
 *
 * # Safety
 * `target` must point to 4 readable doubles; `angles_deg_out` to
 * `2 * capacity` writable doubles; `steps_out` must be writable.
 */
enum CvmbqcStatus cvmbqc_compile(const double *target,
                                 double *angles_deg_out,
                                 size_t capacity,
                                 size_t *steps_out);

/**
 * Sample an `n_steps` identity chain and return the measured nullifier
 * variance sum with its bootstrap standard error; deterministic in `seed`.
 *
 * # Safety
 * Out-pointers must be writable.
 */
enum CvmbqcStatus cvmbqc_sample_nullifier_sum(size_t n_steps,
                                              double squeezing_db,
                                              uint64_t shots,
                                              uint64_t seed,
                                              double *sum_out,
                                              double *err_out);

/**
 * True when `message` occurs in the last error (test helper for bindings).
 *
 * # Safety
 * `message` must be a valid NUL-terminated string or NULL.
 */
bool cvmbqc_last_error_contains(const char *message);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CVMBQC_H */

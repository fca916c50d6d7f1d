#ifndef KMSBEC_H
#define KMSBEC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KmsbecStatus {
  KMSBEC_STATUS_OK = 0,
  KMSBEC_STATUS_NULL_POINTER = 1,
  KMSBEC_STATUS_INVALID_PARAMETER = 2,
  KMSBEC_STATUS_NONCONVERGENCE = 3,
  KMSBEC_STATUS_INVARIANT = 4,
  KMSBEC_STATUS_PANIC = 5,
} KmsbecStatus;

/**
 * Opaque model handle.
 */
typedef struct KmsbecModel KmsbecModel;

typedef struct KmsbecSpectrum {
  double phi;
  double m1_sq;
  double m2_sq;
} KmsbecSpectrum;

typedef struct KmsbecThermal {
  double psi_sq;
  double j_tilde;
  double rho_cr;
  double m_b1_sq;
  double m_b2_sq;
  double condensate_charge;
  double total_charge;
} KmsbecThermal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a model; `m_v = 0` selects the plain splitting.
 *
 * # Safety
 * `out` must be valid for a write of one pointer. On success the handle
 * must eventually be passed to [`kmsbec_model_free`].
 */
enum KmsbecStatus kmsbec_model_new(double m,
                                   double mu,
                                   double lambda,
                                   double beta,
                                   double m_v,
                                   struct KmsbecModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from [`kmsbec_model_new`] that has not
 * been freed.
 */
void kmsbec_model_free(struct KmsbecModel *model);

/**
 * Sets the relative and absolute quadrature tolerances.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum KmsbecStatus kmsbec_model_set_tolerances(struct KmsbecModel *model, double rtol, double atol);

/**
 * # Safety
 * `model` must be a live handle and `out` valid for one write.
 */
enum KmsbecStatus kmsbec_model_spectrum(const struct KmsbecModel *model,
                                        struct KmsbecSpectrum *out);

/**
 * Both dispersion branches at momentum magnitude `p`.
 *
 * # Safety
 * `model` must be a live handle; `plus` and `minus` valid for one write each.
 */
enum KmsbecStatus kmsbec_omega_pm(const struct KmsbecModel *model,
                                  double p,
                                  double *plus,
                                  double *minus);

/**
 * Thermal masses of the two fluctuation components at inverse temperature `beta`.
 *
 * # Safety
 * `model` must be a live handle; `m1_sq` and `m2_sq` valid for one write each.
 */
enum KmsbecStatus kmsbec_thermal_masses(const struct KmsbecModel *model,
                                        double beta,
                                        double *m1_sq,
                                        double *m2_sq);

/**
 * # Safety
 * `model` must be a live handle and `out` valid for one write.
 */
enum KmsbecStatus kmsbec_thermal_observables(const struct KmsbecModel *model,
                                             double beta,
                                             struct KmsbecThermal *out);

/**
 * # Safety
 * `model` must be a live handle and `out` valid for one write.
 */
enum KmsbecStatus kmsbec_critical_density(const struct KmsbecModel *model,
                                          double beta,
                                          double *out);

/**
 * Temperature at which the critical density equals `rho_target`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for one write.
 */
enum KmsbecStatus kmsbec_critical_temperature(const struct KmsbecModel *model,
                                              double rho_target,
                                              double *out);

/**
 * Smeared charge commutator at radius `r` with time half-width `eps`;
 * writes two components to `out`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for two writes.
 */
enum KmsbecStatus kmsbec_charge_commutator(const struct KmsbecModel *model,
                                           double r,
                                           double eps,
                                           double *out);

/**
 * Message of the last failure on this thread, or null if none.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *kmsbec_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *kmsbec_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KMSBEC_H */

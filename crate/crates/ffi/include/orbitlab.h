/* C interface for the orbitlab numerical laboratory.
 *
 * Maintained by hand alongside crates/ffi/src/lib.rs; the Rust test
 * tests/header_sync.rs fails if either side drifts.
 *
 * Conventions:
 *   - constructors return NULL on failure; orbitlab_last_error() then holds
 *     a thread-local message (valid until the next failing call);
 *   - status-returning functions never unwind;
 *   - each handle type has exactly one _free, safe to call with NULL.
 */

#ifndef ORBITLAB_H
#define ORBITLAB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum OrbitlabStatus {
  ORBITLAB_OK = 0,
  ORBITLAB_INVALID_ARGUMENT = 1,
  ORBITLAB_TUBE_EXIT = 2,
  ORBITLAB_DEGENERATE_NORMAL = 3,
  ORBITLAB_NONDEGENERACY_VIOLATION = 4,
  ORBITLAB_MAX_ITERS_EXCEEDED = 5,
  ORBITLAB_CLASS_DRIFT = 6,
  ORBITLAB_NOT_A_GEODESIC = 7,
  ORBITLAB_RESONANT_LAMBDA = 8,
  ORBITLAB_FIXED_POINT_DIVERGED = 9,
  ORBITLAB_DEGENERATE_GEODESIC = 10,
  ORBITLAB_NEWTON_DIVERGED = 11,
  ORBITLAB_SINGULAR_JACOBIAN = 12,
  ORBITLAB_ADMISSIBILITY_FAILED = 13,
  ORBITLAB_CONTRACTION_FAILED = 14,
  ORBITLAB_CONFIG_ERROR = 15,
  ORBITLAB_INSUFFICIENT_POINTS = 16,
  ORBITLAB_IO_ERROR = 17,
  ORBITLAB_CLAIM_FAILED = 18,
  ORBITLAB_PANIC = 19,
} OrbitlabStatus;

/* Opaque handles. */
typedef struct OrbitlabScenario OrbitlabScenario;
typedef struct OrbitlabLoop OrbitlabLoop;
typedef struct OrbitlabBundle OrbitlabBundle;

/* Flat summary of a Newton-corrected orbit. */
typedef struct OrbitlabOrbitSummary {
  double eps;
  double residual_sup;
  double correction_sup;
  double correction_normal_sup;
  double cond_estimate;
  double energy_drift;
  uint64_t newton_iters;
} OrbitlabOrbitSummary;

/* Version string of the underlying crate; static storage, do not free. */
const char *orbitlab_version(void);

/* Message for the most recent error on this thread. Do not free. */
const char *orbitlab_last_error(void);

/* Scenario: name is "circle" | "sphere" | "sphere-quartic" | "torus";
 * unused parameters are ignored (pass 0); n_samples even, >= 64. */
OrbitlabScenario *orbitlab_scenario_new(const char *name, double b0,
                                        double cubic, double big_r,
                                        double small_r, size_t n_samples);
void orbitlab_scenario_free(OrbitlabScenario *handle);

/* Closed geodesic in a homotopy class (class_len: 1 circle, 2 torus). */
OrbitlabLoop *orbitlab_find_geodesic(const OrbitlabScenario *scenario,
                                     const int64_t *klass, size_t class_len);
void orbitlab_loop_free(OrbitlabLoop *handle);
size_t orbitlab_loop_len(const OrbitlabLoop *handle);
size_t orbitlab_loop_dim(const OrbitlabLoop *handle);
/* Copies samples time-major: out[j*dim + c]; out_len >= len*dim. */
OrbitlabStatus orbitlab_loop_samples(const OrbitlabLoop *handle, double *out,
                                     size_t out_len);
double orbitlab_loop_energy(const OrbitlabScenario *scenario,
                            const OrbitlabLoop *handle);

/* Second-order expansion bundle over a nondegenerate geodesic. */
OrbitlabBundle *orbitlab_build_bundle(const OrbitlabScenario *scenario,
                                      const OrbitlabLoop *geodesic);
void orbitlab_bundle_free(OrbitlabBundle *handle);
OrbitlabLoop *orbitlab_bundle_assemble(const OrbitlabScenario *scenario,
                                       const OrbitlabBundle *bundle,
                                       double eps);
OrbitlabStatus orbitlab_residual_dual_norm(const OrbitlabScenario *scenario,
                                           const OrbitlabBundle *bundle,
                                           double eps, double *out);

/* Newton correction to a true periodic orbit at eps. */
OrbitlabStatus orbitlab_correct_orbit(const OrbitlabScenario *scenario,
                                      const OrbitlabBundle *bundle, double eps,
                                      OrbitlabOrbitSummary *summary,
                                      OrbitlabLoop **out_orbit);

/* Resonance-avoiding epsilon: b0/eps = (2 pi (k + 1/2))^2, period-1 time. */
double orbitlab_resonance_epsilon(double b0, size_t k);

/* Closed-form periodic Green-kernel norms, classical [0, 2pi] convention. */
OrbitlabStatus orbitlab_green_kernel_norms(double lambda_2pi, double *out_sup,
                                           double *out_l1);

/* Run a full pipeline from a config file (CLI format). */
OrbitlabStatus orbitlab_run_config(const char *path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* ORBITLAB_H */

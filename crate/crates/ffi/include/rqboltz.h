#ifndef RQBOLTZ_H
#define RQBOLTZ_H

/* This file is generated by cbindgen from the rqboltz-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum {
  RQB_STATUS_OK = 0,
  RQB_STATUS_NULL_POINTER = 1,
  RQB_STATUS_INVALID_ARGUMENT = 2,
  RQB_STATUS_CONFIG_ERROR = 3,
  RQB_STATUS_NUMERICAL_ERROR = 4,
  RQB_STATUS_INTERNAL = 5,
} RqbStatus;

/**
 * Opaque parsed configuration.
 */
typedef struct RqbConfig RqbConfig;

/**
 * Opaque solver: configuration, matched equilibrium and current state.
 */
typedef struct RqbSolver RqbSolver;

/**
 * Diagnostics of the current solver state.
 */
typedef struct {
  double t;
  double mass;
  double momentum[3];
  double energy;
  double entropy_h;
  double l2_f;
  double nu_norm_f;
  double min_f;
  double max_f;
} RqbDiagnostics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of the calling thread into `buf`
 * (NUL-terminated, truncated to `cap`). Returns the full message length.
 */
size_t rqb_last_error(char *buf, size_t cap);

/**
 * Crate version as a static NUL-terminated string.
 */
const char *rqb_version(void);

/**
 * Minkowski product of two on-shell momenta given by spatial components.
 */
RqbStatus rqb_minkowski_product(const double *p, const double *q, double *out);

/**
 * Relative energy `s` and relative momentum `g` of a pair.
 */
RqbStatus rqb_relative_quantities(const double *p, const double *q, double *s_out, double *g_out);

/**
 * Moller velocity of a pair (square-root form).
 */
RqbStatus rqb_moller_velocity(const double *p, const double *q, double *out);

/**
 * Hard-potential cross section `g sin(theta)`.
 */
double rqb_cross_section(double g, double theta);

/**
 * Equilibrium occupancy `1 / (e^{a p0 + c} - tau)` at spatial momentum `p`;
 * `tau` is +1 for bosons, -1 for fermions.
 */
RqbStatus rqb_equilibrium_m(double a, double c, int32_t tau, const double *p, double *out);

/**
 * Modified Bessel function I0.
 */
RqbStatus rqb_bessel_i0(double y, double *out);

/**
 * The reduced kernel integral B(p, p'; a) and its closed-form upper bound.
 */
RqbStatus rqb_reduced_b(const double *p,
                        const double *p_prime,
                        double a,
                        double *b_out,
                        double *upper_out);

/**
 * Parses a configuration from NUL-terminated `key = value` text. Returns a
 * handle or NULL (inspect `rqb_last_error`).
 */
RqbConfig *rqb_config_parse(const char *text);

/**
 * Frees a configuration handle.
 */
void rqb_config_free(RqbConfig *config);

/**
 * Writes the canonical normalized `key = value` form into `buf`.
 * Returns the full length of the normalized text.
 */
size_t rqb_config_normalized(const RqbConfig *config, char *buf, size_t cap);

/**
 * Creates a solver from a parsed configuration: builds the initial state
 * and matches the reference equilibrium to it.
 */
RqbSolver *rqb_solver_new(const RqbConfig *config);

/**
 * Advances the solver by `steps` collision (and transport, on the torus)
 * steps of the configured dt.
 */
RqbStatus rqb_solver_step(RqbSolver *solver, size_t steps);

/**
 * Fills the diagnostics of the current state.
 */
RqbStatus rqb_solver_diagnostics(const RqbSolver *solver, RqbDiagnostics *out);

/**
 * Number of stored field values (x-cells times momentum nodes).
 */
size_t rqb_solver_len(const RqbSolver *solver);

/**
 * Copies the current field (x-major, p-lexicographic) into `buf`.
 */
RqbStatus rqb_solver_values(const RqbSolver *solver, double *buf, size_t len);

/**
 * Frees a solver handle.
 */
void rqb_solver_free(RqbSolver *solver);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* RQBOLTZ_H */

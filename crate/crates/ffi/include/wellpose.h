#ifndef WELLPOSE_H
#define WELLPOSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum WpStatus {
  WP_STATUS_OK = 0,
  WP_STATUS_NULL_POINTER = 1,
  WP_STATUS_INVALID_ARGUMENT = 2,
  WP_STATUS_PARSE = 3,
  WP_STATUS_DOMAIN = 4,
  WP_STATUS_NUMERIC = 5,
  WP_STATUS_IO = 6,
  WP_STATUS_PANIC = 7,
} WpStatus;

typedef enum WpVerdict {
  WP_VERDICT_ADMISSIBLE = 0,
  WP_VERDICT_INADMISSIBLE = 1,
  WP_VERDICT_INCONCLUSIVE = 2,
} WpVerdict;

// Parsed run configuration.
typedef struct WpConfig WpConfig;

// Simulation state with its forcing and integrator buffers.
typedef struct WpState WpState;

// Recorded forward run.
typedef struct WpTrajectory WpTrajectory;

// One diagnostic sample of a trajectory.
typedef struct WpSample {
  uint64_t step;
  double t;
  double dt;
  double kinetic_energy;
  double max_abs_divergence;
  double max_abs_eps_rho;
  // NaN when the run had no reference field.
  double l2_distance;
  double total_mass;
  bool diverged;
} WpSample;

// Classification of one initial-data point.
typedef struct WpPointResult {
  enum WpVerdict verdict;
  double final_l2;
  double energy_ratio;
  bool diverged;
  bool little_o_pass;
  double t_reached;
  uint64_t steps;
} WpPointResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *wp_version(void);

// Message of the last failed call on this thread, or an empty string.
// Valid until the next call into the library on the same thread.
const char *wp_last_error_message(void);

// Default configuration.
//
// # Safety
// `out` must be valid for writes.
enum WpStatus wp_config_default(struct WpConfig **out);

// Parses `section.key=value` configuration text.
//
// # Safety
// `text` must be a NUL-terminated string and `out` valid for writes.
enum WpStatus wp_config_parse(const char *text, struct WpConfig **out);

// Writes the canonical text of `cfg` into `buf` (NUL-terminated, truncated
// to `cap`). `needed` receives the full length including the NUL; pass a
// null `buf` to query it.
//
// # Safety
// `cfg` must come from this library; `buf` must hold `cap` bytes when
// non-null; `needed` must be valid for writes.
enum WpStatus wp_config_emit(const struct WpConfig *cfg, char *buf, size_t cap, size_t *needed);

// # Safety
// `cfg` must come from this library or be null.
void wp_config_free(struct WpConfig *cfg);

// Steady channel velocity `-px/(2μ) y(h−y)`.
//
// # Safety
// `out` must be valid for writes.
enum WpStatus wp_poiseuille_profile(double y, double mu, double px, double h, double *out);

// Steady residual max-norm of the configured benchmark on the configured
// grid, and whether it meets `run.tol_residual`.
//
// # Safety
// `cfg` must come from this library; outputs must be valid for writes.
enum WpStatus wp_bench_residual(const struct WpConfig *cfg, double *max_norm, bool *passed);

// State built from the configuration's `init.*` data on its grid.
//
// # Safety
// `cfg` must come from this library; `out` must be valid for writes.
enum WpStatus wp_state_create(const struct WpConfig *cfg, struct WpState **out);

// Advances `n_steps` RK4 steps, choosing each step from the stability
// limit scaled by `cfl`. Stops early, still returning `Ok`, once the state
// has diverged.
//
// # Safety
// `state` must come from this library.
enum WpStatus wp_state_step(struct WpState *state, uint64_t n_steps, double cfl);

// Grid size of the state.
//
// # Safety
// `state` must come from this library; outputs must be valid for writes.
enum WpStatus wp_state_grid(const struct WpState *state, size_t *nx, size_t *ny);

// Copies both velocity components, row-major with `x` fastest
// (index `j*nx + i`), into buffers of exactly `len = nx*ny` values.
//
// # Safety
// `state` must come from this library; `ux` and `uy` must hold `len` values.
enum WpStatus wp_state_copy_velocity(const struct WpState *state,
                                     double *ux,
                                     double *uy,
                                     size_t len);

// # Safety
// `state` must come from this library; `out` must be valid for writes.
enum WpStatus wp_state_time(const struct WpState *state, double *out);

// # Safety
// `state` must come from this library; `out` must be valid for writes.
enum WpStatus wp_state_diverged(const struct WpState *state, bool *out);

// # Safety
// `state` must come from this library; `out` must be valid for writes.
enum WpStatus wp_state_kinetic_energy(const struct WpState *state, double *out);

// # Safety
// `state` must come from this library; `out` must be valid for writes.
enum WpStatus wp_state_total_mass(const struct WpState *state, double *out);

// # Safety
// `state` must come from this library or be null.
void wp_state_free(struct WpState *state);

// Forward run of the configuration's `init.*` data to `run.t_end`, with
// the scaled steady profile as reference.
//
// # Safety
// `cfg` must come from this library; `out` must be valid for writes.
enum WpStatus wp_run_forward(const struct WpConfig *cfg, struct WpTrajectory **out);

// Number of recorded samples.
//
// # Safety
// `traj` must come from this library; `out` must be valid for writes.
enum WpStatus wp_trajectory_len(const struct WpTrajectory *traj, size_t *out);

// # Safety
// `traj` must come from this library; `out` must be valid for writes.
enum WpStatus wp_trajectory_sample(const struct WpTrajectory *traj, size_t k, struct WpSample *out);

// # Safety
// `traj` must come from this library; `out` must be valid for writes.
enum WpStatus wp_trajectory_diverged(const struct WpTrajectory *traj, bool *out);

// # Safety
// `traj` must come from this library or be null.
void wp_trajectory_free(struct WpTrajectory *traj);

// Reversed-time decomposition at height `y` of a channel of width `h`:
// integrates from `j(t0) = j0` to `t_end` in `steps` RK4 steps and returns
// the extrapolated numeric limit and the closed-form limit.
//
// # Safety
// Outputs must be valid for writes.
enum WpStatus wp_decomposition_limit(double y,
                                     double mu,
                                     double h,
                                     double j0,
                                     double t0,
                                     double t_end,
                                     size_t steps,
                                     double *numeric,
                                     double *closed_form);

// Classifies the initial data `(alpha, eps, k)` with the configuration's
// grid, fluid and `run.*` options.
//
// # Safety
// `cfg` must come from this library; `out` must be valid for writes.
enum WpStatus wp_classify(const struct WpConfig *cfg,
                          double alpha,
                          double eps,
                          uint32_t k,
                          struct WpPointResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WELLPOSE_H */

#ifndef LATTICE_WALK_H
#define LATTICE_WALK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LwStatus {
  LW_STATUS_OK = 0,
  LW_STATUS_NULL_POINTER = 1,
  LW_STATUS_INVALID_ARGUMENT = 2,
  LW_STATUS_CONFIG = 3,
  LW_STATUS_INSUFFICIENT_DATA = 4,
  LW_STATUS_ABORTED = 5,
  LW_STATUS_NUMERICAL = 6,
  LW_STATUS_IO = 7,
  LW_STATUS_PANIC = 8,
} LwStatus;

// Crank-Nicolson solver for the energy-space Fokker-Planck equation.
typedef struct LwFpe LwFpe;

// A seeded trajectory together with its random stream and recorded events.
typedef struct LwTrajectory LwTrajectory;

// Normalized lattice parameters; SI conversion constants take their defaults.
typedef struct LwParams {
  double delta;
  double gamma;
  double omega_r;
  double diffusion_delta_divisor;
} LwParams;

typedef struct LwState {
  double x;
  double p;
  double u;
  double v;
  double z;
  double tau;
} LwState;

// Grid for `lw_fpe_new_constant()`.
typedef struct LwFpeGrid {
  double h_min;
  double h_max;
  uintptr_t n_cells;
  double dtau;
  bool left_absorbing;
  bool right_absorbing;
} LwFpeGrid;

typedef struct LwEnsembleSummary {
  uint64_t trajectories;
  uint64_t se_events;
  uint64_t sign_changes;
  uint64_t flights;
  uint64_t aborted;
} LwEnsembleSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL.
//
// The pointer stays valid until the next failing call on the same thread.
const char *lw_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *lw_version(void);

// Default parameters (detuning -0.001).
struct LwParams lw_params_default(void);

// Total energy of `state`.
//
// # Safety
// `state` and `out_energy` must be valid pointers.
enum LwStatus lw_energy(struct LwParams params, const struct LwState *state, double *out_energy);

// Create a trajectory. Equal `(seed, stream)` pairs reproduce the same run.
//
// # Safety
// `initial` must be valid; `out_handle` must be writable. Release the handle
// with `lw_trajectory_free()`.
enum LwStatus lw_trajectory_new(struct LwParams params,
                                const struct LwState *initial,
                                double dtau,
                                uint64_t seed,
                                uint64_t stream,
                                struct LwTrajectory **out_handle);

// Advance to `tau_end` and write the final state.
//
// # Safety
// `handle` must come from `lw_trajectory_new()`; `out_state` may be NULL.
enum LwStatus lw_trajectory_evolve(struct LwTrajectory *handle,
                                   double tau_end,
                                   struct LwState *out_state);

// Number of spontaneous emissions so far.
//
// # Safety
// `handle` must come from `lw_trajectory_new()`.
enum LwStatus lw_trajectory_jump_count(const struct LwTrajectory *handle, uint64_t *out_count);

// Copy up to `capacity` momentum sign-change times into `buffer` and store
// the total number recorded in `out_len`. Pass a NULL buffer to query the length.
//
// # Safety
// `buffer` must hold `capacity` doubles when non-NULL.
enum LwStatus lw_trajectory_sign_changes(const struct LwTrajectory *handle,
                                         double *buffer,
                                         uintptr_t capacity,
                                         uintptr_t *out_len);

// # Safety
// `handle` must come from `lw_trajectory_new()` and not be used afterwards. NULL is ignored.
void lw_trajectory_free(struct LwTrajectory *handle);

// Solver with constant drift `c` and diffusion `d`, started from a point mass at `h0`.
//
// # Safety
// `out_handle` must be writable. Release with `lw_fpe_free()`.
enum LwStatus lw_fpe_new_constant(struct LwFpeGrid grid,
                                  double c,
                                  double d,
                                  double h0,
                                  struct LwFpe **out_handle);

// Take `steps` time steps.
//
// # Safety
// `handle` must come from `lw_fpe_new_constant()`.
enum LwStatus lw_fpe_step(struct LwFpe *handle, uint64_t steps);

// Current time and absorbed mass at the lower and upper walls. Any output may be NULL.
//
// # Safety
// `handle` must come from `lw_fpe_new_constant()`.
enum LwStatus lw_fpe_status(const struct LwFpe *handle,
                            double *out_tau,
                            double *out_absorbed_low,
                            double *out_absorbed_high);

// Copy the cell densities; same buffer protocol as `lw_trajectory_sign_changes()`.
//
// # Safety
// `buffer` must hold `capacity` doubles when non-NULL.
enum LwStatus lw_fpe_density(const struct LwFpe *handle,
                             double *buffer,
                             uintptr_t capacity,
                             uintptr_t *out_len);

// # Safety
// `handle` must come from `lw_fpe_new_constant()` and not be used afterwards. NULL is ignored.
void lw_fpe_free(struct LwFpe *handle);

// Run an ensemble from a TOML configuration (NULL for defaults) and write
// the event files and manifest into `out_dir`. `workers == 0` uses every core.
//
// # Safety
// `config_path` may be NULL; `out_dir` must be a NUL-terminated UTF-8 path.
enum LwStatus lw_simulate(const char *config_path,
                          const char *out_dir,
                          uintptr_t workers,
                          struct LwEnsembleSummary *out_summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LATTICE_WALK_H */

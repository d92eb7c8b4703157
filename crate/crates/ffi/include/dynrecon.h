#ifndef DYNRECON_H
#define DYNRECON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum DrStatus {
  DR_STATUS_OK = 0,
  DR_STATUS_NULL_POINTER = 1,
  DR_STATUS_INVALID_ARGUMENT = 2,
  DR_STATUS_NUMERICAL = 3,
  DR_STATUS_IO = 4,
  DR_STATUS_PANIC = 5,
} DrStatus;

typedef enum DrSystemKind {
  DR_SYSTEM_KIND_TORUS = 0,
  DR_SYSTEM_KIND_LORENZ63 = 1,
  DR_SYSTEM_KIND_L63_ROT = 2,
} DrSystemKind;

/**
 * A fitted one-step model on a delay embedding.
 */
typedef struct DrModel DrModel;

/**
 * A reference system.
 */
typedef struct DrSystem DrSystem;

/**
 * A sampled orbit with its full-state measurement.
 */
typedef struct DrTrajectory DrTrajectory;

/**
 * An Ulam transition matrix with its partition.
 */
typedef struct DrTransition DrTransition;

/**
 * Fitting options for [`dr_model_fit`].
 */
typedef struct DrFitOptions {
  /**
   * Number of delays (at least 1).
   */
  size_t q;
  /**
   * Gaussian centers; 0 selects the affine hypothesis space.
   */
  size_t centers;
  /**
   * Bandwidth relative to the median pairwise distance.
   */
  double bandwidth_scale;
  /**
   * Ridge parameter; negative selects the trace-scaled default.
   */
  double ridge;
  /**
   * Training uses samples before this index.
   */
  size_t train_end;
} DrFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the buffer size needed for the full message.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t dr_last_error_message(char *buf, size_t len);

/**
 * Create a system with default parameters.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DrStatus dr_system_new(enum DrSystemKind kind, struct DrSystem **out);

/**
 * # Safety
 * `system` must be null or a handle from [`dr_system_new`], freed once.
 */
void dr_system_free(struct DrSystem *system);

/**
 * Set the per-step rotation vector.
 *
 * # Safety
 * `system` must be a live handle.
 */
enum DrStatus dr_system_set_rotation(struct DrSystem *system, double rho1, double rho2);

/**
 * State dimension, or 0 for a null handle.
 *
 * # Safety
 * `system` must be null or a live handle.
 */
size_t dr_system_state_dim(const struct DrSystem *system);

/**
 * Advance `state` (length `len`) by one step into `out`.
 *
 * # Safety
 * `state` and `out` must point to `len` doubles.
 */
enum DrStatus dr_system_step(const struct DrSystem *system,
                             const double *state,
                             double *out,
                             size_t len);

/**
 * Leading `count` Lyapunov exponents per time unit from `steps` QR steps
 * along the default orbit.
 *
 * # Safety
 * `exponents` must point to `count` writable doubles.
 */
enum DrStatus dr_system_lyapunov(const struct DrSystem *system,
                                 size_t steps,
                                 double *exponents,
                                 size_t count);

/**
 * Sample `n` states with a full-state measurement. A null `initial` uses
 * the system's default initial state (with spin-up).
 *
 * # Safety
 * `initial` must be null or point to `state_dim` doubles; `out` must be valid.
 */
enum DrStatus dr_trajectory_generate(const struct DrSystem *system,
                                     const double *initial,
                                     size_t n,
                                     struct DrTrajectory **out);

/**
 * # Safety
 * `trajectory` must be null or a live handle, freed once.
 */
void dr_trajectory_free(struct DrTrajectory *trajectory);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `trajectory` must be null or a live handle.
 */
size_t dr_trajectory_len(const struct DrTrajectory *trajectory);

/**
 * Dimension of the measured values, or 0 for a null handle.
 *
 * # Safety
 * `trajectory` must be null or a live handle.
 */
size_t dr_trajectory_dim(const struct DrTrajectory *trajectory);

/**
 * Rescale the measured series to zero mean and unit RMS over
 * `[start, end)`.
 *
 * # Safety
 * `trajectory` must be a live handle.
 */
enum DrStatus dr_trajectory_normalize(struct DrTrajectory *trajectory, size_t start, size_t end);

/**
 * Copy the measured series row by row into `out` (`len = samples * dim`).
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum DrStatus dr_trajectory_measured(const struct DrTrajectory *trajectory,
                                     double *out,
                                     size_t len);

/**
 * Fit `ŵ` on a delay embedding of the measured series.
 *
 * # Safety
 * `trajectory` and `options` must be valid; `out` must be valid.
 */
enum DrStatus dr_model_fit(const struct DrTrajectory *trajectory,
                           const struct DrFitOptions *options,
                           struct DrModel **out);

/**
 * # Safety
 * `model` must be null or a live handle, freed once.
 */
void dr_model_free(struct DrModel *model);

/**
 * Projection error `δ` of the fit, or NaN for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
double dr_model_delta(const struct DrModel *model);

/**
 * Iterate the model `n` steps from sample `start` of the trajectory it was
 * fitted on, writing `u_0, …, u_n` row by row (`len = (n + 1) * dim`).
 * Divergent rollouts are padded with NaN.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum DrStatus dr_model_forecast(const struct DrModel *model,
                                const struct DrTrajectory *trajectory,
                                size_t start,
                                size_t n,
                                double *out,
                                size_t len);

/**
 * Ulam matrix of the trajectory states on a box partition of the listed
 * coordinates (angle coordinates of the system are treated as periodic).
 *
 * # Safety
 * `coordinates` and `resolution` must point to `count` values; `out` must be valid.
 */
enum DrStatus dr_transition_build(const struct DrTrajectory *trajectory,
                                  const size_t *coordinates,
                                  const size_t *resolution,
                                  size_t count,
                                  struct DrTransition **out);

/**
 * # Safety
 * `transition` must be null or a live handle, freed once.
 */
void dr_transition_free(struct DrTransition *transition);

/**
 * Number of cells, or 0 for a null handle.
 *
 * # Safety
 * `transition` must be null or a live handle.
 */
size_t dr_transition_size(const struct DrTransition *transition);

/**
 * Entry `P_ij`.
 *
 * # Safety
 * `value` must be a valid pointer.
 */
enum DrStatus dr_transition_get(const struct DrTransition *transition,
                                size_t i,
                                size_t j,
                                double *value);

/**
 * Cell of a state, or -1 when the state lies outside the partition.
 *
 * # Safety
 * `state` must point to `len` doubles.
 */
int64_t dr_transition_locate(const struct DrTransition *transition,
                             const double *state,
                             size_t len);

/**
 * Stationary distribution into `pi` (`len` = number of cells). Returns
 * `Numerical` when the iteration does not reach `tol`.
 *
 * # Safety
 * `pi` must point to `len` writable doubles.
 */
enum DrStatus dr_transition_stationary(const struct DrTransition *transition,
                                       double tol,
                                       size_t max_iters,
                                       double *pi,
                                       size_t len);

/**
 * Write the matrix in coordinate-list text form to `path`.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum DrStatus dr_transition_write_coo(const struct DrTransition *transition, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DYNRECON_H */

/* C interface for the pointctl pointing-movement model library. */

#ifndef POINTCTL_H
#define POINTCTL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code returned by every fallible entry point.
typedef enum PointctlStatus {
  POINTCTL_OK = 0,
  // A required pointer argument was null.
  POINTCTL_NULL_POINTER = 1,
  // Model name, parameter vector, or task was rejected; see `pointctl_last_error`.
  POINTCTL_INVALID_ARGUMENT = 2,
  // The optimal-control solve failed; see `pointctl_last_error`.
  POINTCTL_SOLVER_FAILURE = 3,
  // The caller's buffer is shorter than the series being copied out.
  POINTCTL_BUFFER_TOO_SMALL = 4,
  // An internal invariant was violated; see `pointctl_last_error`.
  POINTCTL_INTERNAL_PANIC = 5,
} PointctlStatus;

// Opaque simulation result; free with `pointctl_sim_free`.
typedef struct PointctlSim PointctlSim;

// Pointing task: move from `start` to a target of width `width` centered at
// `target`, over `n_steps` steps of `h` seconds each. Distances are meters.
typedef struct PointctlTask {
  double start;
  double target;
  double width;
  double h;
  size_t n_steps;
} PointctlTask;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the most recent error message on this thread into `buf` (always
// NUL-terminated when `cap > 0`) and return the message length in bytes,
// excluding the terminator. Call with a null `buf` to query the length.
size_t pointctl_last_error(char *buf, size_t cap);

// Library version as a static NUL-terminated string.
const char *pointctl_version(void);

// Number of parameters `model` takes in its canonical order.
//
// # Safety
// `model` must be NUL-terminated; `count` must be a valid pointer.
enum PointctlStatus pointctl_param_count(const char *model, size_t *count);

// Name of parameter `index` of `model` in the canonical order, copied into
// `buf` NUL-terminated.
//
// # Safety
// `model` must be NUL-terminated; `buf` must hold at least `cap` bytes.
enum PointctlStatus pointctl_param_name(const char *model, size_t index, char *buf, size_t cap);

// Simulate `model` with `params` (length `n_params`, canonical order) on
// `task`, storing an owned handle in `*sim`.
//
// # Safety
// `params` must point to `n_params` doubles; `task` and `sim` must be valid.
enum PointctlStatus pointctl_simulate(const char *model,
                                      const double *params,
                                      size_t n_params,
                                      const struct PointctlTask *task,
                                      struct PointctlSim **sim);

// Number of samples per kinematic series (steps + 1); 0 for a null handle.
size_t pointctl_sim_len(const struct PointctlSim *sim);

// Step duration in seconds; 0 for a null handle.
double pointctl_sim_step_seconds(const struct PointctlSim *sim);

// Mean position series in meters.
// Copies `pointctl_sim_len` doubles.
//
// # Safety
// `buf` must hold at least `cap` doubles.
enum PointctlStatus pointctl_sim_positions(const struct PointctlSim *sim, double *buf, size_t cap);

// Mean velocity series in m/s.
// Copies `pointctl_sim_len` doubles.
//
// # Safety
// `buf` must hold at least `cap` doubles.
enum PointctlStatus pointctl_sim_velocities(const struct PointctlSim *sim, double *buf, size_t cap);

// Mean acceleration series in m/s^2.
// Copies `pointctl_sim_len` doubles.
//
// # Safety
// `buf` must hold at least `cap` doubles.
enum PointctlStatus pointctl_sim_accelerations(const struct PointctlSim *sim,
                                               double *buf,
                                               size_t cap);

// Control series (one entry per step, `pointctl_sim_len` minus 1 values).
//
// # Safety
// `buf` must hold at least `cap` doubles.
enum PointctlStatus pointctl_sim_controls(const struct PointctlSim *sim, double *buf, size_t cap);

// 1 when the model carries a state distribution (lqg, elqg), else 0.
int pointctl_sim_has_distribution(const struct PointctlSim *sim);

// Per-sample position standard deviation in meters; fails with
// `POINTCTL_INVALID_ARGUMENT` for deterministic models.
//
// # Safety
// `buf` must hold at least `cap` doubles.
enum PointctlStatus pointctl_sim_position_stddev(const struct PointctlSim *sim,
                                                 double *buf,
                                                 size_t cap);

// Release a handle returned by `pointctl_simulate`; null is a no-op.
//
// # Safety
// `sim` must be a handle from `pointctl_simulate`, freed at most once.
void pointctl_sim_free(struct PointctlSim *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POINTCTL_H */

#ifndef SMPKIT_H
#define SMPKIT_H

/* Generated from the smpkit-ffi Rust sources; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a toolkit call. `SMP_OK` is zero; everything else is a failure
// whose description is readable via `smp_last_error_message`.
typedef enum smp_status {
  // The call succeeded and any out parameters were written.
  SMP_OK = 0,
  // A required pointer argument was null.
  SMP_ERR_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  SMP_ERR_UTF8 = 2,
  // The model JSON did not parse against the schema.
  SMP_ERR_PARSE = 3,
  // The model description was rejected (unknown state, negative rate, …).
  SMP_ERR_MODEL = 4,
  // Path sampling failed (explosive intensities, bad window, …).
  SMP_ERR_SIMULATION = 5,
  // The forward solver rejected its inputs or lost conservation.
  SMP_ERR_SOLVER = 6,
  // An index, time, or duration was outside the valid range.
  SMP_ERR_OUT_OF_RANGE = 7,
  // An internal invariant failed; the library caught a panic.
  SMP_ERR_PANIC = 8,
} smp_status;

// A validated model: named states and the intensity fields between them.
typedef struct smp_model smp_model;

// One solved transition law p_{i·}(s, t, u, ·) on a grid of times t.
typedef struct smp_solution smp_solution;

// One sampled path: the initial condition plus its jump sequence.
typedef struct smp_trajectory smp_trajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// The symbolic name of a status code (passed as its integer value), as a
// static NUL-terminated string.
const char *smp_status_name(int status);

// Description of the most recent failure on the calling thread, or the
// empty string if none. The pointer stays valid until the next failing
// call on the same thread.
const char *smp_last_error_message(void);

// Build a model from its JSON description — the same schema as the `model`
// section of a CLI config: `{"states": [...], "intensities": [{"from",
// "to", "field"}, ...]}`.
//
// # Safety
// `json` must point to a NUL-terminated string and `out` to writable
// storage for one pointer. On `SMP_OK` the caller owns the new handle and
// must release it with [`smp_model_free`].
enum smp_status smp_model_from_json(const char *json, struct smp_model **out);

// Release a model handle. Null is ignored.
//
// # Safety
// `model` must be null or a pointer from [`smp_model_from_json`] that has
// not been freed yet; no other handle may still borrow it.
void smp_model_free(struct smp_model *model);

// Number of states in the model; 0 if `model` is null.
//
// # Safety
// `model` must be null or a live handle from [`smp_model_from_json`].
size_t smp_model_state_count(const struct smp_model *model);

// Name of state `state`, valid for as long as the model handle lives.
//
// # Safety
// `model` must be a live handle and `out` writable storage for one pointer.
enum smp_status smp_model_state_name(const struct smp_model *model, size_t state, const char **out);

// Index of the state called `name`.
//
// # Safety
// `model` must be a live handle, `name` a NUL-terminated string, and `out`
// writable storage for one `size_t`.
enum smp_status smp_model_state_index(const struct smp_model *model, const char *name, size_t *out);

// Intensity q_{from→to}(t, u): the jump rate from `from` to `to` at
// calendar time `t` and duration `u`.
//
// # Safety
// `model` must be a live handle and `out` writable storage for one double.
enum smp_status smp_model_rate(const struct smp_model *model,
                               size_t from,
                               size_t to,
                               double t,
                               double u,
                               double *out);

// Total exit rate q_from(t, u) = Σ_{j≠from} q_{from→j}(t, u).
//
// # Safety
// `model` must be a live handle and `out` writable storage for one double.
enum smp_status smp_model_total_rate(const struct smp_model *model,
                                     size_t from,
                                     double t,
                                     double u,
                                     double *out);

// Sample one path from `(initial_state, start_time, initial_duration)` to
// `horizon`. The pair `(seed, path_index)` picks an independent RNG
// substream, so a batch is reproduced path by path.
//
// # Safety
// `model` must be a live handle and `out` writable storage for one
// pointer. On `SMP_OK` the caller owns the trajectory and must release it
// with [`smp_trajectory_free`].
enum smp_status smp_simulate(const struct smp_model *model,
                             size_t initial_state,
                             double start_time,
                             double initial_duration,
                             double horizon,
                             size_t max_jumps,
                             uint64_t seed,
                             uint64_t path_index,
                             struct smp_trajectory **out);

// Release a trajectory handle. Null is ignored.
//
// # Safety
// `trajectory` must be null or an unfreed pointer from [`smp_simulate`].
void smp_trajectory_free(struct smp_trajectory *trajectory);

// Number of jumps on the path; 0 if `trajectory` is null.
//
// # Safety
// `trajectory` must be null or a live handle from [`smp_simulate`].
size_t smp_trajectory_jump_count(const struct smp_trajectory *trajectory);

// The `index`-th jump (0-based, in time order): when it happened and which
// state it entered.
//
// # Safety
// `trajectory` must be a live handle; `time_out` and `state_out` must be
// writable.
enum smp_status smp_trajectory_jump(const struct smp_trajectory *trajectory,
                                    size_t index,
                                    double *time_out,
                                    size_t *state_out);

// State and duration of the path at `time`, which must lie inside the
// simulated window. The path is càdlàg: at a jump time the entered state
// applies with duration 0.
//
// # Safety
// `trajectory` must be a live handle; `state_out` and `duration_out` must
// be writable.
enum smp_status smp_trajectory_state_at(const struct smp_trajectory *trajectory,
                                        double time,
                                        size_t *state_out,
                                        double *duration_out);

// Solve the forward equations for the transition law row of
// `(initial_state, start_time, initial_duration)` up to `end_time` on a
// duration/time grid of width `delta` (which must divide the interval).
//
// # Safety
// `model` must be a live handle and `out` writable storage for one
// pointer. On `SMP_OK` the caller owns the solution and must release it
// with [`smp_solution_free`].
enum smp_status smp_solve(const struct smp_model *model,
                          size_t initial_state,
                          double start_time,
                          double initial_duration,
                          double end_time,
                          double delta,
                          struct smp_solution **out);

// Release a solution handle. Null is ignored.
//
// # Safety
// `solution` must be null or an unfreed pointer from [`smp_solve`].
void smp_solution_free(struct smp_solution *solution);

// Last grid time the solution covers; NaN if `solution` is null.
//
// # Safety
// `solution` must be null or a live handle from [`smp_solve`].
double smp_solution_end_time(const struct smp_solution *solution);

// P(state at `time` is `state`), with `time` on the solution's grid.
//
// # Safety
// `solution` must be a live handle and `out` writable storage for one
// double.
enum smp_status smp_solution_marginal(const struct smp_solution *solution,
                                      double time,
                                      size_t state,
                                      double *out);

// P(state at `time` is `state` and its duration is ≤ `d`), with `time` on
// the solution's grid.
//
// # Safety
// `solution` must be a live handle and `out` writable storage for one
// double.
enum smp_status smp_solution_cdf(const struct smp_solution *solution,
                                 double time,
                                 size_t state,
                                 double d,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMPKIT_H */

#ifndef LOOPSCHED_H
#define LOOPSCHED_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LsKernel {
  LS_KERNEL_MAT_MUL = 0,
  LS_KERNEL_ADJOINT_CONVOLUTION = 1,
} LsKernel;

/**
 * Status codes. Zero is success.
 */
typedef enum LsStatus {
  LS_STATUS_OK = 0,
  LS_STATUS_INVALID_ARGUMENT = 1,
  LS_STATUS_NULL_POINTER = 2,
  LS_STATUS_PARSE = 3,
  LS_STATUS_IO = 4,
  LS_STATUS_RUNTIME = 5,
  LS_STATUS_VALIDATION = 6,
  LS_STATUS_MEASUREMENT = 7,
  LS_STATUS_PANIC = 8,
} LsStatus;

/**
 * Scheduling technique selector.
 */
typedef enum LsTechnique {
  LS_TECHNIQUE_STATIC = 0,
  LS_TECHNIQUE_SELF_SCHEDULING = 1,
  LS_TECHNIQUE_GUIDED = 2,
  LS_TECHNIQUE_FACTORING = 3,
} LsTechnique;

/**
 * Opaque chunk plan.
 */
typedef struct LsPlan LsPlan;

/**
 * Opaque platform description.
 */
typedef struct LsPlatform LsPlatform;

/**
 * Opaque simulation result.
 */
typedef struct LsSimResult LsSimResult;

/**
 * Outcome of a native run.
 */
typedef struct LsNativeStats {
  double wall_time_s;
  double parallel_cost;
  uint64_t chunks;
  /**
   * Negative when validation was not requested.
   */
  double max_relative_error;
} LsNativeStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *ls_last_error_message(void);

/**
 * Builds the chunk plan for `total` iterations on `workers` workers.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum LsStatus ls_plan_new(enum LsTechnique technique,
                          uint64_t total,
                          uint64_t workers,
                          struct LsPlan **out);

/**
 * Number of chunks, or 0 for a null handle.
 *
 * # Safety
 * `plan` must be null or a handle from [`ls_plan_new`].
 */
uint64_t ls_plan_len(const struct LsPlan *plan);

/**
 * Size of chunk `step`, or 0 past the end.
 *
 * # Safety
 * `plan` must be null or a handle from [`ls_plan_new`].
 */
uint64_t ls_plan_chunk(const struct LsPlan *plan, uint64_t step);

/**
 * # Safety
 * `plan` must be null or a handle from [`ls_plan_new`] not freed before.
 */
void ls_plan_free(struct LsPlan *plan);

/**
 * Chunk size at `step` without materialising the plan.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum LsStatus ls_chunk_at_step(enum LsTechnique technique,
                               uint64_t total,
                               uint64_t workers,
                               uint64_t step,
                               uint64_t *out);

/**
 * Loads a platform file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LsStatus ls_platform_load(const char *path, struct LsPlatform **out);

/**
 * Platform from explicit values: FLOP/s, bit/s and seconds.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum LsStatus ls_platform_new(uint64_t hosts,
                              double speed_flops,
                              double bandwidth_bps,
                              double latency_s,
                              struct LsPlatform **out);

/**
 * # Safety
 * `platform` must be null or a live platform handle.
 */
void ls_platform_free(struct LsPlatform *platform);

/**
 * Simulates one loop with the analytic cost model and constant RP3
 * overheads. `g1`/`g2` scale the two kernels' iteration costs.
 *
 * # Safety
 * `platform` must be a live handle and `out` a valid pointer.
 */
enum LsStatus ls_simulate(const struct LsPlatform *platform,
                          enum LsKernel kernel,
                          uint64_t matrix_order,
                          enum LsTechnique technique,
                          uint64_t threads,
                          double g1,
                          double g2,
                          bool shared_memory,
                          struct LsSimResult **out);

/**
 * Makespan in seconds, or NaN for a null handle.
 *
 * # Safety
 * `result` must be null or a live result handle.
 */
double ls_sim_result_makespan(const struct LsSimResult *result);

/**
 * Makespan in integer picoseconds, or 0 for a null handle.
 *
 * # Safety
 * `result` must be null or a live result handle.
 */
uint64_t ls_sim_result_makespan_ps(const struct LsSimResult *result);

/**
 * Makespan times thread count, or NaN for a null handle.
 *
 * # Safety
 * `result` must be null or a live result handle.
 */
double ls_sim_result_parallel_cost(const struct LsSimResult *result);

/**
 * # Safety
 * `result` must be null or a live result handle.
 */
uint64_t ls_sim_result_chunk_count(const struct LsSimResult *result);

/**
 * # Safety
 * `result` must be null or a live result handle not freed before.
 */
void ls_sim_result_free(struct LsSimResult *result);

/**
 * Runs a kernel natively on `threads` threads over random inputs from
 * `seed`. With `validate`, the output is checked against a serial run.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum LsStatus ls_run_native(enum LsKernel kernel,
                            uint64_t matrix_order,
                            enum LsTechnique technique,
                            uint64_t threads,
                            uint64_t seed,
                            bool validate,
                            struct LsNativeStats *out);

/**
 * `(1 - simulated / reference) * 100`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum LsStatus ls_percent_error(double simulated, double reference, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOOPSCHED_H */

#ifndef COREPLAN_H
#define COREPLAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes. The first four agree with the CLI exit codes.
 */
typedef enum CpStatus {
  CP_STATUS_OK = 0,
  CP_STATUS_INVALID_ARGUMENT = 1,
  CP_STATUS_INFEASIBLE = 2,
  CP_STATUS_RESOURCE_GATE = 3,
  CP_STATUS_PARSE = 4,
  CP_STATUS_IO = 5,
  CP_STATUS_NULL_POINTER = 6,
  CP_STATUS_OUT_OF_RANGE = 7,
  CP_STATUS_NON_CONVERGENCE = 8,
  CP_STATUS_BUFFER_TOO_SMALL = 9,
  CP_STATUS_INTERNAL = 10,
} CpStatus;

/**
 * The result of simulating a plan.
 */
typedef struct CpExecution CpExecution;

/**
 * A loaded graph.
 */
typedef struct CpGraph CpGraph;

/**
 * A slot plan.
 */
typedef struct CpPlan CpPlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null after a
 * success. Valid until the next call into this library on the same thread.
 */
const char *cp_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a pointer returned by a `*_to_json` function that has
 * not been freed yet.
 */
void cp_string_free(char *s);

/**
 * Loads a whitespace-separated edge list from `path`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CpStatus cp_graph_load(const char *path, bool directed, struct CpGraph **out);

/**
 * Builds a graph from `len` edges `(src[i], dst[i])`.
 *
 * # Safety
 * `src` and `dst` must point to `len` readable values; `out` must be writable.
 */
enum CpStatus cp_graph_from_edges(const uint32_t *src,
                                  const uint32_t *dst,
                                  size_t len,
                                  bool directed,
                                  struct CpGraph **out);

/**
 * # Safety
 * `g` must be null or a handle from `cp_graph_load`/`cp_graph_from_edges`.
 */
void cp_graph_free(struct CpGraph *g);

/**
 * Vertex count, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live graph handle.
 */
size_t cp_graph_vertex_count(const struct CpGraph *g);

/**
 * Stored arc count (undirected edges count twice), or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live graph handle.
 */
size_t cp_graph_edge_count(const struct CpGraph *g);

/**
 * # Safety
 * `g` must be a live graph handle; `out` must be writable.
 */
enum CpStatus cp_graph_out_degree(const struct CpGraph *g, uint32_t v, size_t *out);

/**
 * Approximate PPR from `source` with default accuracy parameters for the
 * graph. Writes one score per vertex into `scores` (`len >= n`).
 *
 * # Safety
 * `g` must be a live graph handle; `scores` must hold `len` writable values.
 */
enum CpStatus cp_ppr_query(const struct CpGraph *g,
                           uint32_t source,
                           double alpha,
                           double epsilon,
                           uint64_t seed,
                           double *scores,
                           size_t len);

/**
 * Exact PPR by power iteration, for small graphs.
 *
 * # Safety
 * `g` must be a live graph handle; `scores` must hold `len` writable values.
 */
enum CpStatus cp_ppr_exact(const struct CpGraph *g,
                           uint32_t source,
                           double alpha,
                           double tolerance,
                           size_t max_iterations,
                           double *scores,
                           size_t len);

/**
 * # Safety
 * `out` must be writable.
 */
enum CpStatus cp_sample_size(double z, double p, double e, size_t *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum CpStatus cp_z_for_confidence(uint32_t level, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum CpStatus cp_lemma1_bound(size_t queries, double deadline, double t_max, double *out);

/**
 * Hoeffding baseline core count (unrounded).
 *
 * # Safety
 * `out` must be writable.
 */
enum CpStatus cp_hoeffding_bound(size_t queries,
                                 double deadline,
                                 double t_bar,
                                 double t_hat,
                                 size_t samples,
                                 double p_f,
                                 double *out);

/**
 * Plan for unlimited cores from the longest sampled query time `t_max`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CpStatus cp_plan_ideal(size_t queries,
                            double deadline,
                            size_t samples,
                            double t_max,
                            struct CpPlan **out);

/**
 * Plan under a core limit from `samples` sample durations in nanoseconds,
 * timed on `c` cores. `c_max == 0` means no limit.
 *
 * # Safety
 * `durations_ns` must point to `samples` readable values; `out` must be writable.
 */
enum CpStatus cp_plan_real(size_t queries,
                           double deadline,
                           size_t c_max,
                           double d,
                           size_t c,
                           const uint64_t *durations_ns,
                           size_t samples,
                           struct CpPlan **out);

/**
 * # Safety
 * `plan` must be null or a live plan handle.
 */
void cp_plan_free(struct CpPlan *plan);

/**
 * Cores per slot, or 0 for a null handle.
 *
 * # Safety
 * `plan` must be null or a live plan handle.
 */
size_t cp_plan_cores(const struct CpPlan *plan);

/**
 * Slot count, or 0 for a null handle.
 *
 * # Safety
 * `plan` must be null or a live plan handle.
 */
size_t cp_plan_slots(const struct CpPlan *plan);

/**
 * Sample size, or 0 for a null handle.
 *
 * # Safety
 * `plan` must be null or a live plan handle.
 */
size_t cp_plan_samples(const struct CpPlan *plan);

/**
 * # Safety
 * `plan` must be a live plan handle; `out` must be writable. The string is
 * released with `cp_string_free`.
 */
enum CpStatus cp_plan_to_json(const struct CpPlan *plan, char **out);

/**
 * Runs `plan` in virtual time with one duration (ns) per query.
 *
 * # Safety
 * `plan` must be a live plan handle; `durations_ns` must point to `len`
 * readable values; `out` must be writable.
 */
enum CpStatus cp_simulate(const struct CpPlan *plan,
                          const uint64_t *durations_ns,
                          size_t len,
                          size_t c,
                          struct CpExecution **out);

/**
 * # Safety
 * `exec` must be null or a live execution handle.
 */
void cp_execution_free(struct CpExecution *exec);

/**
 * Whether the deadline check passed; false for a null handle.
 *
 * # Safety
 * `exec` must be null or a live execution handle.
 */
bool cp_execution_feasible(const struct CpExecution *exec);

/**
 * Left-hand side of the deadline check in seconds; NaN for a null handle.
 *
 * # Safety
 * `exec` must be null or a live execution handle.
 */
double cp_execution_check_value(const struct CpExecution *exec);

/**
 * # Safety
 * `exec` must be a live execution handle; `out` must be writable. The
 * string is released with `cp_string_free`.
 */
enum CpStatus cp_execution_to_json(const struct CpExecution *exec, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COREPLAN_H */

#ifndef ASYNCPD_H
#define ASYNCPD_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ApdStatus {
  APD_STATUS_OK = 0,
  APD_STATUS_NULL_POINTER = 1,
  APD_STATUS_INVALID_ARGUMENT = 2,
  APD_STATUS_CONFIG = 3,
  APD_STATUS_NOT_CONVERGED = 4,
  APD_STATUS_IO = 5,
  APD_STATUS_BUFFER_TOO_SMALL = 6,
  APD_STATUS_PANIC = 7,
} ApdStatus;

/**
 * Opaque problem handle.
 */
typedef struct ApdProblem ApdProblem;

/**
 * Opaque per-round trace handle.
 */
typedef struct ApdTrace ApdTrace;

/**
 * Summary of one benchmark run.
 */
typedef struct ApdFlowResult {
  uint64_t rounds;
  uint64_t ticks;
  bool converged;
  double gamma;
  double rho;
  double primal_err_reg;
  double primal_err_unreg;
  double dual_err_reg;
  double dual_err_unreg;
  double max_g_final;
  double max_g_reg;
} ApdFlowResult;

/**
 * One round of a trace; errors are NaN when no reference was available.
 */
typedef struct ApdRound {
  uint64_t t;
  uint64_t k_t;
  uint64_t c_t;
  uint64_t fresh;
  double primal_err_reg;
  double primal_err_unreg;
  double dual_err_reg;
  double dual_err_unreg;
  double max_g;
  double dual_bound;
  double primal_bound;
} ApdRound;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *apd_version(void);

/**
 * Message of the last failure on this thread, or NULL. Valid until the
 * next call into the library from the same thread.
 */
const char *apd_last_error(void);

/**
 * Flow-routing benchmark with default settings.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum ApdStatus apd_problem_flow_default(struct ApdProblem **out);

/**
 * Problem loaded from a `key = value` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ApdStatus apd_problem_from_config(const char *path, struct ApdProblem **out);

/**
 * # Safety
 * `p` must be NULL or a handle from this library not yet freed.
 */
void apd_problem_free(struct ApdProblem *p);

/**
 * Number of agents, primal dimension and number of constraints. Any output
 * pointer may be NULL.
 *
 * # Safety
 * `p` must be a live handle; non-NULL outputs must be writable.
 */
enum ApdStatus apd_problem_dims(const struct ApdProblem *p,
                                size_t *agents,
                                size_t *dim,
                                size_t *constraints);

/**
 * Regularized saddle point. `x` and `mu` must hold the primal dimension and
 * the number of constraints; `iterations` may be NULL.
 *
 * # Safety
 * Buffers must be valid for the stated lengths.
 */
enum ApdStatus apd_solve_saddle(const struct ApdProblem *p,
                                double alpha,
                                double beta,
                                double tol,
                                double *x,
                                size_t x_len,
                                double *mu,
                                size_t mu_len,
                                uint64_t *iterations);

/**
 * Run the default benchmark for `(alpha, beta)` with the given seed and
 * horizon (0 keeps the default). `trace` may be NULL when the per-round
 * records are not needed. A run that hits the horizon still fills `result`
 * and returns `NotConverged`.
 *
 * # Safety
 * `result` must be writable; `trace`, if non-NULL, must be writable.
 */
enum ApdStatus apd_run_flow(double alpha,
                            double beta,
                            uint64_t seed,
                            uint64_t horizon,
                            uint64_t record_every,
                            struct ApdFlowResult *result,
                            struct ApdTrace **trace);

/**
 * Number of stored round records.
 *
 * # Safety
 * `t` must be NULL or a live handle.
 */
size_t apd_trace_len(const struct ApdTrace *t);

/**
 * # Safety
 * `t` must be a live handle and `out` writable.
 */
enum ApdStatus apd_trace_round(const struct ApdTrace *t, size_t index, struct ApdRound *out);

/**
 * Final aggregate and dual value. Lengths follow [`apd_problem_dims`].
 *
 * # Safety
 * Buffers must be valid for the stated lengths.
 */
enum ApdStatus apd_trace_final(const struct ApdTrace *t,
                               double *x,
                               size_t x_len,
                               double *mu,
                               size_t mu_len);

/**
 * Write the per-round CSV to `path`.
 *
 * # Safety
 * `t` must be a live handle; `path` a NUL-terminated string.
 */
enum ApdStatus apd_trace_write_csv(const struct ApdTrace *t, const char *path);

/**
 * # Safety
 * `t` must be NULL or a handle from this library not yet freed.
 */
void apd_trace_free(struct ApdTrace *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ASYNCPD_H */

/* C interface of the resonance solver library. */

#ifndef RESONANCE_H
#define RESONANCE_H

/* Generated by cbindgen; edit src/lib.rs instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum RsnStatus {
  RSN_STATUS_OK = 0,
  RSN_STATUS_NULL_ARGUMENT = 1,
  RSN_STATUS_INVALID_UTF8 = 2,
  RSN_STATUS_INVALID_SPEC = 3,
  RSN_STATUS_CONDITION_VIOLATED = 4,
  RSN_STATUS_NO_CONVERGENCE = 5,
  RSN_STATUS_OUT_OF_RANGE = 6,
  RSN_STATUS_PANIC = 7,
} RsnStatus;

/**
 * Verdict of a solvability check.
 */
typedef enum RsnVerdict {
  RSN_VERDICT_HOLDS = 0,
  RSN_VERDICT_FAILS = 1,
  RSN_VERDICT_BOUNDARY = 2,
} RsnVerdict;

/**
 * Outcome of a solve, mirrored from the report.
 */
typedef enum RsnSolveStatus {
  RSN_SOLVE_CONVERGED = 0,
  RSN_SOLVE_MAX_ITER = 1,
  RSN_SOLVE_DIVERGED = 2,
  RSN_SOLVE_CONDITION_VIOLATED = 3,
} RsnSolveStatus;

/**
 * An opaque problem handle: a parsed specification plus solver options.
 */
typedef struct RsnProblem RsnProblem;

/**
 * An opaque solve report handle.
 */
typedef struct RsnReport RsnReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the most recent error message on this thread into `buf` (NUL
 * terminated, truncated to `cap` bytes). Returns the full message length in
 * bytes, excluding the terminator; call with a null `buf` to size a buffer.
 */
uintptr_t rsn_last_error_message(char *buf, uintptr_t cap);

/**
 * Parse a TOML problem specification. On success `*out` owns a new handle.
 */
enum RsnStatus rsn_problem_parse(const char *text, struct RsnProblem **out);

/**
 * Release a problem handle. Null is ignored.
 */
void rsn_problem_free(struct RsnProblem *problem);

/**
 * Override the solver options carried by a handle. An `anderson_depth` of
 * zero selects plain relaxation; `gate` is a boolean flag.
 */
enum RsnStatus rsn_problem_set_options(struct RsnProblem *problem,
                                       double tol,
                                       uintptr_t max_iter,
                                       double relax,
                                       uintptr_t anderson_depth,
                                       int32_t gate);

/**
 * Evaluate the family's solvability condition. `margin` and `verdict` may
 * each be null when the caller does not need them. Returns
 * `RSN_STATUS_CONDITION_VIOLATED` when the condition fails, which still
 * writes both outputs.
 */
enum RsnStatus rsn_check(const struct RsnProblem *problem,
                         double *margin,
                         enum RsnVerdict *verdict);

/**
 * Evaluate the solvability condition and return its JSON report through
 * `out`; release with `rsn_string_free`.
 */
enum RsnStatus rsn_check_json(const struct RsnProblem *problem, char **out);

/**
 * Run the solver. A report handle is produced through `out` whenever the
 * solver itself ran, including non-converged outcomes; the return value
 * summarizes the report status. Specification-level failures produce no
 * report.
 */
enum RsnStatus rsn_solve(const struct RsnProblem *problem, struct RsnReport **out);

/**
 * Release a report handle. Null is ignored.
 */
void rsn_report_free(struct RsnReport *report);

enum RsnSolveStatus rsn_report_status(const struct RsnReport *report);

double rsn_report_residual_l2(const struct RsnReport *report);

double rsn_report_residual_sup(const struct RsnReport *report);

uintptr_t rsn_report_iterations(const struct RsnReport *report);

/**
 * Number of solution components: 1 for scalar and periodic families, 2 for
 * systems, 0 when the solve aborted before producing a candidate.
 */
uintptr_t rsn_report_components(const struct RsnReport *report);

/**
 * Number of grid samples per solution component.
 */
uintptr_t rsn_report_sample_count(const struct RsnReport *report);

/**
 * Copy the grid samples of one solution component into `buf`, which must
 * hold `rsn_report_sample_count` values.
 */
enum RsnStatus rsn_report_samples(const struct RsnReport *report,
                                  uintptr_t component,
                                  double *buf,
                                  uintptr_t len);

/**
 * Serialize the full report (without the raw solution) as JSON; release
 * with `rsn_string_free`.
 */
enum RsnStatus rsn_report_json(const struct RsnReport *report, char **out);

/**
 * Release a string returned by this library. Null is ignored.
 */
void rsn_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RESONANCE_H */

#ifndef NPA_H
#define NPA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NpaStatus {
  NPA_STATUS_OK = 0,
  NPA_STATUS_NULL_POINTER = 1,
  NPA_STATUS_INVALID_ARGUMENT = 2,
  NPA_STATUS_PARSE = 3,
  NPA_STATUS_STRUCTURE = 4,
  NPA_STATUS_SIMULATION = 5,
  NPA_STATUS_ASSEMBLY = 6,
  NPA_STATUS_SOLVE = 7,
  NPA_STATUS_PANIC = 8,
} NpaStatus;

typedef enum NpaVerdict {
  NPA_VERDICT_INCONCLUSIVE = 0,
  NPA_VERDICT_NONLOCAL = 1,
} NpaVerdict;

typedef struct NpaReport NpaReport;

typedef struct NpaStructure NpaStructure;

typedef struct NpaTable NpaTable;

/**
 * Solver knobs exposed over the ABI; the rest keep their defaults.
 */
typedef struct NpaSolverOptions {
  uint64_t seed;
  size_t max_iters;
  double margin;
} NpaSolverOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default solver options.
 */
struct NpaSolverOptions npa_solver_options_default(void);

/**
 * Message of the last failed call on this thread; empty after success.
 * Valid until the next call on the same thread.
 */
const char *npa_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void npa_string_free(char *s);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum NpaStatus npa_structure_new(size_t parties,
                                 size_t settings,
                                 size_t level,
                                 struct NpaStructure **out);

/**
 * # Safety
 * `s` must be a live handle or null.
 */
void npa_structure_free(struct NpaStructure *s);

/**
 * Matrix dimension, or 0 for a null handle.
 *
 * # Safety
 * `s` must be a live handle or null.
 */
size_t npa_structure_dim(const struct NpaStructure *s);

/**
 * # Safety
 * `s` must be a live handle or null.
 */
size_t npa_structure_num_observables(const struct NpaStructure *s);

/**
 * # Safety
 * `s` must be a live handle or null.
 */
size_t npa_structure_num_freevars(const struct NpaStructure *s);

/**
 * # Safety
 * `s` must be a live handle; `out` a valid pointer.
 */
enum NpaStatus npa_structure_to_json(const struct NpaStructure *s, char **out);

/**
 * Parses and validates a correlator table document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum NpaStatus npa_table_from_json(const char *json, struct NpaTable **out);

/**
 * Simulates a built-in state under a standard suite at visibility `p`.
 *
 * # Safety
 * `state` and `suite` must be NUL-terminated strings; `out` a valid pointer.
 */
enum NpaStatus npa_table_simulate(const char *state,
                                  const char *suite,
                                  double visibility,
                                  size_t parties,
                                  size_t settings,
                                  size_t level,
                                  struct NpaTable **out);

/**
 * # Safety
 * `t` must be a live handle or null.
 */
void npa_table_free(struct NpaTable *t);

/**
 * Number of moments, or 0 for a null handle.
 *
 * # Safety
 * `t` must be a live handle or null.
 */
size_t npa_table_len(const struct NpaTable *t);

/**
 * # Safety
 * `t` must be a live handle; `out` a valid pointer.
 */
enum NpaStatus npa_table_to_json(const struct NpaTable *t, char **out);

/**
 * Analyzes a table at hierarchy `level`. `policy` is `"all"` or
 * `"max-bodies:<k>"`; `options` may be null for defaults.
 *
 * # Safety
 * `t` must be a live handle, `policy` a NUL-terminated string, `out` a valid
 * pointer; `options` may be null.
 */
enum NpaStatus npa_analyze_table(const struct NpaTable *t,
                                 size_t level,
                                 const char *policy_name,
                                 const struct NpaSolverOptions *options,
                                 struct NpaReport **out);

/**
 * Parses a verdict report document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum NpaStatus npa_report_from_json(const char *json, struct NpaReport **out);

/**
 * # Safety
 * `r` must be a live handle or null.
 */
void npa_report_free(struct NpaReport *r);

/**
 * # Safety
 * `r` must be a live handle; `out` a valid pointer.
 */
enum NpaStatus npa_report_verdict(const struct NpaReport *r, enum NpaVerdict *out);

/**
 * Optimal minimum eigenvalue, or NaN for a null handle.
 *
 * # Safety
 * `r` must be a live handle or null.
 */
double npa_report_lambda_star(const struct NpaReport *r);

/**
 * Re-verifies the report's certificate against a family rebuilt from the
 * report itself.
 *
 * # Safety
 * `r` must be a live handle; `out` a valid pointer.
 */
enum NpaStatus npa_report_recheck(const struct NpaReport *r, bool *out);

/**
 * # Safety
 * `r` must be a live handle; `out` a valid pointer.
 */
enum NpaStatus npa_report_to_json(const struct NpaReport *r, char **out);

/**
 * Library version as a static string.
 */
const char *npa_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NPA_H */

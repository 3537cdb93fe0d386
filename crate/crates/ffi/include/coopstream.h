#ifndef COOPSTREAM_H
#define COOPSTREAM_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum CsStatus {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_POINTER = 1,
  CS_STATUS_INVALID_UTF8 = 2,
  CS_STATUS_INVALID_CONFIG = 3,
  CS_STATUS_IO = 4,
  /**
   * The call does not fit the handle's state (e.g. a summary before the run finished).
   */
  CS_STATUS_BAD_STATE = 5,
  CS_STATUS_OUT_OF_RANGE = 6,
  CS_STATUS_RUNTIME = 7,
  CS_STATUS_PANIC = 8,
} CsStatus;

/**
 * Opaque simulation handle.
 */
typedef struct CsSimulation CsSimulation;

/**
 * Per-learner aggregates. Fields that are unknown for the run are NaN.
 */
typedef struct CsSummary {
  uint64_t slots;
  double error_pct;
  double training_pct;
  double exploration_pct;
  double exploitation_pct;
  double cum_exp_regret;
  double regret_slope;
  uint64_t aborted;
} CsSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *cs_last_error(void);

/**
 * Parses and validates a JSON configuration and prepares a run with `seed`.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CsStatus cs_sim_new(const char *config_json, uint64_t seed, struct CsSimulation **out);

/**
 * Executes one slot. `*done` is set to 1 once the horizon is reached, in
 * which case no slot was executed and the run is finalized.
 *
 * # Safety
 * `sim` must come from [`cs_sim_new`]; `done` may be NULL.
 */
enum CsStatus cs_sim_step(struct CsSimulation *sim, uint8_t *done);

/**
 * Runs every remaining slot.
 *
 * # Safety
 * `sim` must come from [`cs_sim_new`].
 */
enum CsStatus cs_sim_run(struct CsSimulation *sim);

/**
 * Number of learners in the run.
 *
 * # Safety
 * `sim` must come from [`cs_sim_new`]; `out` must be valid.
 */
enum CsStatus cs_sim_learner_count(const struct CsSimulation *sim, size_t *out);

/**
 * Summary of `learner` once the run has finished.
 *
 * # Safety
 * `sim` must come from [`cs_sim_new`]; `out` must be valid.
 */
enum CsStatus cs_sim_summary(const struct CsSimulation *sim, size_t learner, struct CsSummary *out);

/**
 * Writes metrics.csv, summary.csv and manifest.json into `dir`.
 *
 * # Safety
 * `sim` must come from [`cs_sim_new`]; `dir` must be a NUL-terminated path.
 */
enum CsStatus cs_sim_write_outputs(const struct CsSimulation *sim, const char *dir);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `sim` must come from [`cs_sim_new`] and not be used afterwards.
 */
void cs_sim_free(struct CsSimulation *sim);

/**
 * Best arm by `accuracy - cost` over `n` arms; ties go to the lowest index.
 *
 * # Safety
 * `accuracies` and `costs` must point to `n` doubles; outputs must be valid.
 */
enum CsStatus cs_oracle_best_arm(const double *accuracies,
                                 const double *costs,
                                 size_t n,
                                 size_t *arm,
                                 double *net_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COOPSTREAM_H */

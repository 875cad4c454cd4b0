#ifndef OVERSKETCH_H
#define OVERSKETCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum {
  OsnStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  OsnStatus_NullArgument = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  OsnStatus_InvalidUtf8 = 2,
  /**
   * The experiment configuration failed validation.
   */
  OsnStatus_InvalidConfig = 3,
  /**
   * File system error while reading the config or writing the trace.
   */
  OsnStatus_IoError = 4,
  /**
   * The solver reported an error (not a normal non-converged exit).
   */
  OsnStatus_SolverError = 5,
  /**
   * An internal panic was caught at the boundary.
   */
  OsnStatus_Internal = 6,
} OsnStatus;

/**
 * Termination reason of a finished run, mirroring the CLI exit codes.
 */
typedef enum {
  OsnTermination_Converged = 0,
  OsnTermination_MaxIterations = 2,
  OsnTermination_LineSearchStalled = 3,
} OsnTermination;

/**
 * Opaque handle to a loaded experiment configuration.
 */
typedef struct OsnExperiment OsnExperiment;

/**
 * Flat result of a finished experiment run.
 */
typedef struct {
  OsnTermination termination;
  /**
   * Iterations recorded in the trace.
   */
  uint64_t iterations;
  double final_f;
  double final_grad_norm;
  /**
   * Cumulative virtual time of the run.
   */
  double total_virtual_time;
} OsnRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message for this thread into `buf` (NUL terminated,
 * truncated to `len` bytes) and returns the full message length in bytes,
 * excluding the terminator. `buf` may be null to query the length.
 *
 * # Safety
 * `buf`, when non-null, must be valid for writes of `len` bytes.
 */
size_t osn_last_error(char *buf, size_t len);

/**
 * Parses an experiment configuration from TOML text.
 * On success writes an owned handle to `*out`; release with
 * `osn_experiment_free`.
 *
 * # Safety
 * `toml_text` must be a valid NUL-terminated C string and `out` a valid
 * pointer to writable storage for one pointer.
 */
OsnStatus osn_experiment_parse(const char *toml_text, OsnExperiment **out);

/**
 * Loads and validates an experiment configuration from a TOML file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated C string and `out` a valid pointer
 * to writable storage for one pointer.
 */
OsnStatus osn_experiment_load(const char *path, OsnExperiment **out);

/**
 * Runs the experiment and writes the trace CSV. `seed_override` may be null
 * to use the configured seed; `out_path` may be null to use the configured
 * output location. `summary` may be null if the caller only wants the
 * side-effect trace file.
 *
 * # Safety
 * `exp` must be a live handle from `osn_experiment_load`/`parse`. `out_path`,
 * when non-null, must be a valid NUL-terminated C string. `seed_override`
 * and `summary`, when non-null, must point to valid storage.
 */
OsnStatus osn_experiment_run(const OsnExperiment *exp,
                             const uint64_t *seed_override,
                             const char *out_path,
                             OsnRunSummary *summary);

/**
 * Releases a handle returned by `osn_experiment_load`/`parse`.
 * Passing null is a no-op.
 *
 * # Safety
 * `exp` must be null or a live handle that is not used afterwards.
 */
void osn_experiment_free(OsnExperiment *exp);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OVERSKETCH_H */

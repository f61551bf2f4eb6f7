#ifndef CDPRKIT_H
#define CDPRKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CdprStatus {
  CDPR_STATUS_OK = 0,
  CDPR_STATUS_NULL_POINTER = 1,
  CDPR_STATUS_INVALID_ARGUMENT = 2,
  CDPR_STATUS_IO = 3,
  CDPR_STATUS_SOLVER_FAILED = 4,
  CDPR_STATUS_PANIC = 5,
} CdprStatus;

/**
 * Opaque robot configuration.
 */
typedef struct CdprConfigHandle CdprConfigHandle;

/**
 * Opaque trained forward-kinematics model.
 */
typedef struct CdprModelHandle CdprModelHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cdpr_version(void);

/**
 * Message for the most recent failing call on this thread, or an empty
 * string. The pointer stays valid until the next call on this thread.
 */
const char *cdpr_last_error_message(void);

/**
 * Look up a bundled configuration by case-insensitive name (e.g. `"SimC8"`).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum CdprStatus cdpr_config_bundled(const char *name, struct CdprConfigHandle **out);

/**
 * Load a configuration from a TOML file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CdprStatus cdpr_config_load(const char *path, struct CdprConfigHandle **out);

/**
 * # Safety
 * `handle` must be null or come from a `cdpr_config_*` constructor and not
 * have been freed.
 */
void cdpr_config_free(struct CdprConfigHandle *handle);

/**
 * # Safety
 * `handle` must be a live configuration; `out` must be writable.
 */
enum CdprStatus cdpr_config_cable_count(const struct CdprConfigHandle *handle, size_t *out);

/**
 * Cable lengths (mm) for `pose = [x, y, z, roll, pitch, yaw]`.
 * `lengths_len` must equal the cable count.
 *
 * # Safety
 * `pose` must point to 6 doubles and `lengths` to `lengths_len` doubles.
 */
enum CdprStatus cdpr_inverse_kinematics(const struct CdprConfigHandle *handle,
                                        const double *pose,
                                        double *lengths,
                                        size_t lengths_len);

/**
 * Forward kinematics by bounded Levenberg-Marquardt with the default bounds
 * for the configuration. Writes 6 pose values and, if non-null, the final
 * residual norm (mm). Returns `SolverFailed` if the iteration limit is hit
 * before convergence; the best iterate is still written.
 *
 * # Safety
 * `lengths` must point to `lengths_len` doubles and `pose_out` to 6.
 */
enum CdprStatus cdpr_solve_fk_opt(const struct CdprConfigHandle *handle,
                                  const double *lengths,
                                  size_t lengths_len,
                                  double *pose_out,
                                  double *residual_out);

/**
 * Load a model checkpoint written by `cdprkit train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CdprStatus cdpr_model_load(const char *path, struct CdprModelHandle **out);

/**
 * # Safety
 * `handle` must be null or come from `cdpr_model_load` and not have been freed.
 */
void cdpr_model_free(struct CdprModelHandle *handle);

/**
 * Predict the pose for one set of cable lengths on the given configuration.
 *
 * # Safety
 * Handles must be live; `lengths` must point to `lengths_len` doubles and
 * `pose_out` to 6.
 */
enum CdprStatus cdpr_model_predict(const struct CdprModelHandle *model,
                                   const struct CdprConfigHandle *config,
                                   const double *lengths,
                                   size_t lengths_len,
                                   double *pose_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDPRKIT_H */

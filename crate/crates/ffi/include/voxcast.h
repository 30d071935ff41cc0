/* C interface for the voxcast occupancy forecasting library. */

#ifndef VOXCAST_H
#define VOXCAST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes; mirror the CLI exit codes.
 */
typedef enum VcStatus {
  VC_STATUS_OK = 0,
  /**
   * Invalid configuration or arguments.
   */
  VC_STATUS_CONFIG_ERROR = 2,
  /**
   * I/O or computation failure.
   */
  VC_STATUS_RUNTIME_ERROR = 3,
  /**
   * A required pointer argument was null.
   */
  VC_STATUS_NULL_ARGUMENT = 4,
} VcStatus;

/**
 * Opaque run configuration handle.
 */
typedef struct VcConfig VcConfig;

/**
 * Opaque model handle: architecture plus parameters.
 */
typedef struct VcModel VcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; never freed by the caller.
 */
const char *vc_version(void);

/**
 * Message of the most recent failure on this thread. The pointer stays
 * valid until the next library call on the same thread; do not free it.
 */
const char *vc_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be a pointer previously returned by a `vc_*` function that
 * documents caller ownership, and must not have been freed already.
 */
void vc_string_free(char *s);

/**
 * Parses and validates a TOML run configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum VcStatus vc_config_load(const char *path, struct VcConfig **out);

/**
 * # Safety
 * `cfg` must come from `vc_config_load` and not have been freed.
 */
void vc_config_free(struct VcConfig *cfg);

/**
 * Content hash of the configuration (hex, caller-owned string).
 *
 * # Safety
 * `cfg` must be a live handle from `vc_config_load`.
 */
char *vc_config_hash(const struct VcConfig *cfg);

/**
 * Generates the dataset described by the configuration into its data dir.
 *
 * # Safety
 * `cfg` must be a live handle from `vc_config_load`.
 */
enum VcStatus vc_generate_dataset(const struct VcConfig *cfg);

/**
 * Builds a freshly initialized model for the configuration.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be a valid pointer.
 */
enum VcStatus vc_model_new(const struct VcConfig *cfg, struct VcModel **out);

/**
 * Builds the model and restores parameters from a checkpoint file.
 *
 * # Safety
 * `cfg` must be a live handle; `checkpoint` a NUL-terminated path; `out` a
 * valid pointer.
 */
enum VcStatus vc_model_load(const struct VcConfig *cfg,
                            const char *checkpoint,
                            struct VcModel **out);

/**
 * # Safety
 * `model` must come from `vc_model_new`/`vc_model_load`.
 */
void vc_model_free(struct VcModel *model);

/**
 * Total number of parameters in the model.
 *
 * # Safety
 * `model` must be a live handle.
 */
uint64_t vc_model_param_count(const struct VcModel *model);

/**
 * Parameter/FLOP comparison of the four observer variants plus the full
 * pipeline, as a JSON document (caller-owned string; null on failure).
 *
 * # Safety
 * `cfg` must be a live handle.
 */
char *vc_cost_report_json(const struct VcConfig *cfg);

/**
 * Evaluates the model on the configured eval split; returns the IoU report
 * as JSON (caller-owned string; null on failure).
 *
 * # Safety
 * Both handles must be live.
 */
char *vc_evaluate_json(const struct VcConfig *cfg, const struct VcModel *model);

/**
 * Evaluates a reference source (`"copy-last"` or `"oracle"`) on the eval
 * split; returns the IoU report as JSON (caller-owned; null on failure).
 *
 * # Safety
 * `cfg` must be live; `source` a NUL-terminated string.
 */
char *vc_evaluate_baseline_json(const struct VcConfig *cfg, const char *source);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOXCAST_H */

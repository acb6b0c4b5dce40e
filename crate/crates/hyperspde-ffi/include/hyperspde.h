#ifndef HYPERSPDE_H
#define HYPERSPDE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HsIntegrator {
  HS_INTEGRATOR_EXACT = 0,
  HS_INTEGRATOR_EULER = 1,
} HsIntegrator;

typedef enum HsStatus {
  HS_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or a too-small output buffer.
   */
  HS_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Model, parameter or configuration rejected.
   */
  HS_STATUS_INVALID_MODEL = 2,
  /**
   * Location set infeasible at the requested resolution.
   */
  HS_STATUS_PLACEMENT = 3,
  /**
   * Covariance, conditioning or norm failure.
   */
  HS_STATUS_NUMERICAL = 4,
  HS_STATUS_IO = 5,
  /**
   * Too many failed Monte-Carlo replicates.
   */
  HS_STATUS_STUDY_FAILED = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  HS_STATUS_PANIC = 7,
} HsStatus;

typedef struct HsModel HsModel;

typedef struct HsPaths HsPaths;

typedef struct HsStudy HsStudy;

typedef struct HsStudyResult HsStudyResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next failing call.
 */
const char *hs_last_error(void);

/**
 * Library version as a static C string.
 */
const char *hs_version(void);

/**
 * `C(eta_1, T)` of the weak-damping asymptotic variance.
 */
double hs_c_constant(double eta1, double horizon);

/**
 * Model from a preset name (`wave_weak`, `plate_weak`, `plate_structural`).
 *
 * # Safety
 * `name` must be a nul-terminated string; `out` must be writable.
 */
enum HsStatus hs_model_preset(const char *name, struct HsModel **out);

/**
 * Model from a TOML document with the fields of a `[model]` table.
 *
 * # Safety
 * `toml` must be a nul-terminated string; `out` must be writable.
 */
enum HsStatus hs_model_from_toml(const char *toml, struct HsModel **out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void hs_model_free(struct HsModel *model);

/**
 * Number of parameters `p + q`.
 *
 * # Safety
 * `model` must be a live handle or null (returns 0).
 */
size_t hs_model_dim(const struct HsModel *model);

/**
 * Writes `(theta, eta)` into `out[0..p+q]`.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum HsStatus hs_model_parameters(const struct HsModel *model, double *out, size_t len);

/**
 * Replaces `(theta, eta)` with `params[0..p+q]`.
 *
 * # Safety
 * `params` must hold `len` doubles.
 */
enum HsStatus hs_model_set_parameters(struct HsModel *model, const double *params, size_t len);

/**
 * Simulates one replicate with `k_max` modes on `n_steps` equal steps.
 *
 * # Safety
 * `model` must be live; `out` must be writable.
 */
enum HsStatus hs_simulate(const struct HsModel *model,
                          size_t k_max,
                          size_t n_steps,
                          enum HsIntegrator integrator,
                          uint64_t seed,
                          uint64_t replicate,
                          struct HsPaths **out);

/**
 * # Safety
 * `paths` must come from this library and not be used afterwards.
 */
void hs_paths_free(struct HsPaths *paths);

/**
 * Copies mode `k` (1-based) of `u` (`component = 0`) or `v` (`1`) at all `n_steps + 1` times.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum HsStatus hs_paths_mode(const struct HsPaths *paths,
                            uint32_t component,
                            size_t k,
                            double *out,
                            size_t len);

/**
 * Estimate from `n_loc` equispaced bump-kernel measurements at resolution `delta`.
 * Writes `p + q` values to `estimate` and, if non-null, `p + q` standardized errors.
 *
 * # Safety
 * Handles must be live; buffers must hold `len` doubles.
 */
enum HsStatus hs_estimate(const struct HsModel *model,
                          const struct HsPaths *paths,
                          double delta,
                          size_t n_loc,
                          double *estimate,
                          double *standardized,
                          size_t len);

/**
 * Study from a TOML study file's contents.
 *
 * # Safety
 * `toml` must be a nul-terminated string; `out` must be writable.
 */
enum HsStatus hs_study_from_toml(const char *toml, struct HsStudy **out);

/**
 * # Safety
 * `study` must come from this library and not be used afterwards.
 */
void hs_study_free(struct HsStudy *study);

/**
 * Runs the Monte-Carlo study on the global thread pool.
 *
 * # Safety
 * `study` must be live; `out` must be writable.
 */
enum HsStatus hs_study_run(const struct HsStudy *study, struct HsStudyResult **out);

/**
 * # Safety
 * `result` must come from this library and not be used afterwards.
 */
void hs_study_result_free(struct HsStudyResult *result);

/**
 * Number of resolution cells.
 *
 * # Safety
 * `result` must be live or null (returns 0).
 */
size_t hs_study_result_cells(const struct HsStudyResult *result);

/**
 * RMSE of parameter `param` (zero-based) in cell `cell`.
 *
 * # Safety
 * `result` must be live; `out` must be writable.
 */
enum HsStatus hs_study_result_rmse(const struct HsStudyResult *result,
                                   size_t cell,
                                   size_t param,
                                   double *out);

/**
 * Fitted log-log RMSE slope of parameter `param` (needs >= 3 cells).
 *
 * # Safety
 * `result` must be live; `out` must be writable.
 */
enum HsStatus hs_study_result_slope(const struct HsStudyResult *result, size_t param, double *out);

/**
 * Writes the CSV, summary and SVG files into `dir`.
 *
 * # Safety
 * `result` must be live; `dir` must be a nul-terminated string.
 */
enum HsStatus hs_study_result_emit(const struct HsStudyResult *result, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYPERSPDE_H */

#ifndef HYBRID_INVERSION_H
#define HYBRID_INVERSION_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result code of every fallible call.
 */
typedef enum HinvStatus {
  HINV_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  HINV_STATUS_NULL_POINTER = 1,
  /*
   Wrong array length, non-UTF-8 text or an out-of-range value.
   */
  HINV_STATUS_INVALID_ARGUMENT = 2,
  /*
   The configuration or the input data were rejected.
   */
  HINV_STATUS_CONFIG = 3,
  /*
   A solve failed: CFL violation, divergence or non-finite values.
   */
  HINV_STATUS_NUMERICAL = 4,
  /*
   An internal panic was caught at the boundary.
   */
  HINV_STATUS_PANIC = 5,
} HinvStatus;

/*
 Parsed experiment: mesh, phantom coefficients, pulse, time grid, initial
 iterate and objective settings.
 */
typedef struct HinvExperiment HinvExperiment;

/*
 Final coefficients of a reconstruction on its last mesh.
 */
typedef struct HinvReconstruction HinvReconstruction;

/*
 Boundary trace with values ordered `[time][node][component]`.
 */
typedef struct HinvTrace HinvTrace;

typedef struct HinvExperimentInfo {
  size_t dim;
  size_t fem_nodes;
  size_t boundary_nodes;
  /*
   Number of time steps; traces hold `time_steps + 1` levels.
   */
  size_t time_steps;
  double dt;
  double h;
} HinvExperimentInfo;

typedef struct HinvTraceInfo {
  size_t dim;
  size_t nodes;
  size_t times;
} HinvTraceInfo;

typedef struct HinvReconstructionInfo {
  size_t dim;
  size_t fem_nodes;
  /*
   Conjugate-gradient iterations summed over all levels.
   */
  size_t iterations;
  size_t levels;
  double final_j;
  double max_eps;
} HinvReconstructionInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *hinv_version(void);

/*
 Message of the last failed call on this thread, or null after a
 successful one. Valid until the next call on this thread.
 */
const char *hinv_last_error(void);

/*
 Builds an experiment from TOML text. Relative paths inside resolve
 against `base_dir`, or the working directory when it is null.

 # Safety
 `toml` and a non-null `base_dir` are NUL-terminated strings; `out` is
 writable.
 */
enum HinvStatus hinv_experiment_from_toml(const char *toml,
                                          const char *base_dir,
                                          struct HinvExperiment **out);

/*
 Builds an experiment from a TOML file.

 # Safety
 `path` is a NUL-terminated string; `out` is writable.
 */
enum HinvStatus hinv_experiment_load(const char *path, struct HinvExperiment **out);

/*
 # Safety
 `exp` is null or a handle from this library not yet freed.
 */
void hinv_experiment_free(struct HinvExperiment *exp);

/*
 # Safety
 `exp` is a live handle; `info` is writable.
 */
enum HinvStatus hinv_experiment_info(const struct HinvExperiment *exp,
                                     struct HinvExperimentInfo *info);

/*
 FE node coordinates, `dim * fem_nodes` values ordered by node.

 # Safety
 `exp` is a live handle; `coords` is valid for `len` writes.
 */
enum HinvStatus hinv_experiment_fem_coords(const struct HinvExperiment *exp,
                                           double *coords,
                                           size_t len);

/*
 Phantom coefficients at the FE nodes (`which = 0`) or the initial
 iterate (`which = 1`), `fem_nodes` values each.

 # Safety
 `exp` is a live handle; `eps` and `sigma` are valid for `len` writes.
 */
enum HinvStatus hinv_experiment_coefficients(const struct HinvExperiment *exp,
                                             uint32_t which,
                                             double *eps,
                                             double *sigma,
                                             size_t len);

/*
 Forward solve. Null `eps` and `sigma` select the phantom coefficients;
 otherwise both hold `len = fem_nodes` values.

 # Safety
 `exp` is a live handle; non-null `eps` and `sigma` are valid for `len`
 reads; `out` is writable.
 */
enum HinvStatus hinv_forward(const struct HinvExperiment *exp,
                             const double *eps,
                             const double *sigma,
                             size_t len,
                             struct HinvTrace **out);

/*
 Synthetic observations of the phantom with the configured noise level.

 # Safety
 `exp` is a live handle; `out` is writable.
 */
enum HinvStatus hinv_make_observations(const struct HinvExperiment *exp,
                                       uint64_t seed,
                                       struct HinvTrace **out);

/*
 Wraps external data as a trace on the boundary and time grid of `exp`.
 `values` holds `dim * boundary_nodes * (time_steps + 1)` entries.

 # Safety
 `exp` is a live handle; `values` is valid for `len` reads; `out` is
 writable.
 */
enum HinvStatus hinv_trace_from_values(const struct HinvExperiment *exp,
                                       const double *values,
                                       size_t len,
                                       struct HinvTrace **out);

/*
 # Safety
 `trace` is null or a handle from this library not yet freed.
 */
void hinv_trace_free(struct HinvTrace *trace);

/*
 # Safety
 `trace` is a live handle; `info` is writable.
 */
enum HinvStatus hinv_trace_info(const struct HinvTrace *trace, struct HinvTraceInfo *info);

/*
 Copies all `dim * nodes * times` values out.

 # Safety
 `trace` is a live handle; `values` is valid for `len` writes.
 */
enum HinvStatus hinv_trace_values(const struct HinvTrace *trace, double *values, size_t len);

/*
 Objective value and gradients at the given coefficients against `obs`.
 `g_eps` and `g_sigma` may be null when only `J` is wanted.

 # Safety
 `exp` and `obs` are live handles; `eps` and `sigma` are valid for `len`
 reads; `j` is writable; non-null gradient buffers are valid for `len`
 writes.
 */
enum HinvStatus hinv_evaluate(const struct HinvExperiment *exp,
                              const struct HinvTrace *obs,
                              const double *eps,
                              const double *sigma,
                              size_t len,
                              double *j,
                              double *g_eps,
                              double *g_sigma);

/*
 Reconstruction from `obs` starting at the configured initial iterate:
 conjugate gradients on the experiment mesh, or the adaptive driver when
 `adaptive` is set (needs an `[acga]` section).

 # Safety
 `exp` and `obs` are live handles; `out` is writable.
 */
enum HinvStatus hinv_invert(const struct HinvExperiment *exp,
                            const struct HinvTrace *obs,
                            bool adaptive,
                            struct HinvReconstruction **out);

/*
 # Safety
 `rec` is null or a handle from this library not yet freed.
 */
void hinv_reconstruction_free(struct HinvReconstruction *rec);

/*
 # Safety
 `rec` is a live handle; `info` is writable.
 */
enum HinvStatus hinv_reconstruction_info(const struct HinvReconstruction *rec,
                                         struct HinvReconstructionInfo *info);

/*
 Final `eps` and `sigma`, `fem_nodes` values each, on the last mesh.

 # Safety
 `rec` is a live handle; `eps` and `sigma` are valid for `len` writes.
 */
enum HinvStatus hinv_reconstruction_fields(const struct HinvReconstruction *rec,
                                           double *eps,
                                           double *sigma,
                                           size_t len);

/*
 Node coordinates of the last mesh, `dim * fem_nodes` values.

 # Safety
 `rec` is a live handle; `coords` is valid for `len` writes.
 */
enum HinvStatus hinv_reconstruction_coords(const struct HinvReconstruction *rec,
                                           double *coords,
                                           size_t len);

/*
 `J` at every iterate of the last level, `iterations_on_last_level + 1`
 values; `len` may exceed that and `written` receives the count.

 # Safety
 `rec` is a live handle; `j` is valid for `len` writes; `written` is
 writable.
 */
enum HinvStatus hinv_reconstruction_j_history(const struct HinvReconstruction *rec,
                                              double *j,
                                              size_t len,
                                              size_t *written);

/*
 Why the (last level of the) reconstruction stopped, as a NUL-terminated
 string owned by `rec`; null for a null handle.

 # Safety
 `rec` is null or a live handle.
 */
const char *hinv_reconstruction_stop_reason(const struct HinvReconstruction *rec);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYBRID_INVERSION_H */

#ifndef ROUGHFLOW_H
#define ROUGHFLOW_H

/* Generated by cbindgen from the roughflow-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible entry point.
typedef enum RfStatus {
  // Success.
  RF_STATUS_OK = 0,
  // A parameter or configuration was rejected.
  RF_STATUS_INVALID_ARGUMENT = 1,
  // The computation failed numerically (e.g. a factorization broke down).
  RF_STATUS_NUMERICAL = 2,
  // Reading or writing files failed.
  RF_STATUS_IO = 3,
  // A required pointer was null.
  RF_STATUS_NULL_POINTER = 4,
  // A string argument was not valid UTF-8.
  RF_STATUS_INVALID_UTF8 = 5,
  // The library caught a panic; the handle state is unchanged.
  RF_STATUS_PANIC = 6,
} RfStatus;

// Fractional Brownian sampler with a cached covariance factorization.
typedef struct RfFbmSampler RfFbmSampler;

// A driving path enhanced with its second-order iterated integrals.
typedef struct RfRoughPath RfRoughPath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string; never freed.
const char *rf_version(void);

// Message describing the most recent failure on this thread, or null if no
// call has failed yet. The pointer stays valid until the next failing call
// on the same thread.
const char *rf_last_error_message(void);

// Creates a sampler for `dim` independent fBm components on a uniform grid
// of `nodes` points over [0, horizon]. O(nodes^3) once; each draw is
// O(nodes^2).
//
// # Safety
// `out` must point to writable storage for one pointer.
enum RfStatus rf_fbm_sampler_new(double hurst,
                                 size_t dim,
                                 size_t nodes,
                                 double horizon,
                                 struct RfFbmSampler **out);

// Number of doubles one sample occupies: nodes x dim, node-major.
//
// # Safety
// `sampler` must be a live handle from `rf_fbm_sampler_new` or null.
size_t rf_fbm_sampler_values_len(const struct RfFbmSampler *sampler);

// Draws the path for `seed` into `out_values` (length `len`, which must
// equal `rf_fbm_sampler_values_len`). Identical seeds give identical bytes.
//
// # Safety
// `sampler` must be a live handle; `out_values` must point to `len`
// writable doubles.
enum RfStatus rf_fbm_sampler_sample(const struct RfFbmSampler *sampler,
                                    uint64_t seed,
                                    double *out_values,
                                    size_t len);

// Releases a sampler. Null is ignored.
//
// # Safety
// `sampler` must be null or a handle not freed before.
void rf_fbm_sampler_free(struct RfFbmSampler *sampler);

// Samples fBm with the given seed on `nodes` points over [0, horizon] and
// lifts it. Requires `gamma < hurst`.
//
// # Safety
// `out` must point to writable storage for one pointer.
enum RfStatus rf_rough_path_from_fbm(double hurst,
                                     size_t dim,
                                     size_t nodes,
                                     double horizon,
                                     uint64_t seed,
                                     double gamma,
                                     struct RfRoughPath **out);

// Number of grid nodes, or 0 for null.
//
// # Safety
// `path` must be a live handle or null.
size_t rf_rough_path_len(const struct RfRoughPath *path);

// Driver dimension, or 0 for null.
//
// # Safety
// `path` must be a live handle or null.
size_t rf_rough_path_dim(const struct RfRoughPath *path);

// Path increment between nodes `i <= j` into `out` (`len` = dim).
//
// # Safety
// `path` must be a live handle; `out` must hold `len` writable doubles.
enum RfStatus rf_rough_path_increment(const struct RfRoughPath *path,
                                      size_t i,
                                      size_t j,
                                      double *out,
                                      size_t len);

// Second-order block between nodes `i <= j` into `out` (`len` = dim^2,
// row-major).
//
// # Safety
// `path` must be a live handle; `out` must hold `len` writable doubles.
enum RfStatus rf_rough_path_area(const struct RfRoughPath *path,
                                 size_t i,
                                 size_t j,
                                 double *out,
                                 size_t len);

// Worst additivity defect of the second-order blocks over grid triples.
//
// # Safety
// `path` must be a live handle; `out` must point to one writable double.
enum RfStatus rf_rough_path_max_chen_defect(const struct RfRoughPath *path, double *out);

// Worst deviation of the symmetric part from half the squared increment.
//
// # Safety
// `path` must be a live handle; `out` must point to one writable double.
enum RfStatus rf_rough_path_max_symmetry_defect(const struct RfRoughPath *path, double *out);

// Releases a rough path. Null is ignored.
//
// # Safety
// `path` must be null or a handle not freed before.
void rf_rough_path_free(struct RfRoughPath *path);

// Parses and validates an experiment configuration (JSON) without running
// it.
//
// # Safety
// `config_json` must be a valid NUL-terminated C string.
enum RfStatus rf_config_validate(const char *config_json);

// Runs an experiment configuration (JSON), writing artifacts under
// `out_dir` exactly like the command line `run` subcommand. When
// `out_report_json` is non-null it receives the report as a heap-allocated
// JSON string to be released with `rf_string_free`.
//
// # Safety
// `config_json` and `out_dir` must be valid NUL-terminated C strings;
// `out_report_json` must be null or point to writable pointer storage.
enum RfStatus rf_experiment_run(const char *config_json,
                                const char *out_dir,
                                char **out_report_json);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a string returned by `rf_experiment_run`, not freed
// before.
void rf_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* ROUGHFLOW_H */

#ifndef LSBW_H
#define LSBW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LsbwStatus {
  LSBW_STATUS_OK = 0,
  LSBW_STATUS_NULL_POINTER = 1,
  LSBW_STATUS_INVALID_ARGUMENT = 2,
  LSBW_STATUS_DIMENSION_MISMATCH = 3,
  LSBW_STATUS_EMPTY_LEVEL_SET = 4,
  LSBW_STATUS_DEGENERATE_CURVATURE = 5,
  LSBW_STATUS_RESOLUTION = 6,
  LSBW_STATUS_NUMERICAL = 7,
  LSBW_STATUS_UNKNOWN_MODEL = 8,
  LSBW_STATUS_CONFIG = 9,
  LSBW_STATUS_IO = 10,
  // The output buffer is too small.
  LSBW_STATUS_BUFFER_TOO_SMALL = 11,
  LSBW_STATUS_PANIC = 12,
} LsbwStatus;

typedef enum LsbwKernel {
  LSBW_KERNEL_GAUSSIAN = 0,
  // Fourth-order Gaussian-based kernel.
  LSBW_KERNEL_GAUSSIAN4 = 1,
} LsbwKernel;

// Finished experiment handle, one outcome per level.
typedef struct LsbwExperiment LsbwExperiment;

// Mixture model handle.
typedef struct LsbwModel LsbwModel;

// Sample handle; points are stored row-major.
typedef struct LsbwSample LsbwSample;

// Wilcoxon signed-rank result.
typedef struct LsbwWilcoxon {
  double statistic;
  double p_two_sided;
  size_t n;
  // 1 when the null distribution was enumerated exactly, 0 otherwise.
  int32_t exact;
} LsbwWilcoxon;

// Summary of one level of an experiment. Absent values are NaN.
typedef struct LsbwSummary {
  double tau;
  double level;
  size_t reps;
  size_t computable;
  size_t incomputable;
  size_t failed;
  double incomputable_rate;
  double median_ratio;
  double wilcoxon_statistic;
  double wilcoxon_p;
} LsbwSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *lsbw_last_error_message(void);

// Version string of the library (static storage).
const char *lsbw_version(void);

// Looks a model up by registry id (`M13`, `normal-d1`, `normal-d2`,
// `A`..`L`) or loads it from a TOML file path.
//
// # Safety
// `id` must be a NUL-terminated string; `out` must be writable.
enum LsbwStatus lsbw_model_new(const char *id, struct LsbwModel **out);

// Parses a mixture from TOML text.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum LsbwStatus lsbw_model_from_toml(const char *text, struct LsbwModel **out);

// # Safety
// `model` must come from `lsbw_model_new` or `lsbw_model_from_toml` and
// not have been freed; NULL is ignored.
void lsbw_model_free(struct LsbwModel *model);

// Dimension of the model, or 0 for NULL.
//
// # Safety
// `model` must be a live handle or NULL.
size_t lsbw_model_dim(const struct LsbwModel *model);

// Density at the point `x[0..dim]`.
//
// # Safety
// `model` must be a live handle, `x` must hold `dim` values.
enum LsbwStatus lsbw_model_density(const struct LsbwModel *model,
                                   const double *x,
                                   size_t dim,
                                   double *out);

// Level `c(τ)` of the highest density region with probability `1 − τ`.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum LsbwStatus lsbw_model_hdr_level(const struct LsbwModel *model, double tau, double *out);

// Draws `n` points with the given seed.
//
// # Safety
// `model` must be a live handle; `out` must be writable.
enum LsbwStatus lsbw_model_sample(const struct LsbwModel *model,
                                  size_t n,
                                  uint64_t seed,
                                  struct LsbwSample **out);

// Copies `n` row-major points of dimension `dim`.
//
// # Safety
// `data` must hold `n * dim` values; `out` must be writable.
enum LsbwStatus lsbw_sample_new(const double *data, size_t n, size_t dim, struct LsbwSample **out);

// Reads a CSV point cloud (one point per row, optional header).
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum LsbwStatus lsbw_sample_read_csv(const char *path, struct LsbwSample **out);

// # Safety
// `sample` must be a live handle or NULL.
void lsbw_sample_free(struct LsbwSample *sample);

// Number of points, or 0 for NULL.
//
// # Safety
// `sample` must be a live handle or NULL.
size_t lsbw_sample_len(const struct LsbwSample *sample);

// Dimension, or 0 for NULL.
//
// # Safety
// `sample` must be a live handle or NULL.
size_t lsbw_sample_dim(const struct LsbwSample *sample);

// Kernel density estimate at `x[0..dim]` with bandwidths `h[0..dim]`.
//
// # Safety
// `sample` must be a live handle; `h` and `x` must hold `dim` values.
enum LsbwStatus lsbw_kde_at(const struct LsbwSample *sample,
                            enum LsbwKernel kernel,
                            const double *h,
                            const double *x,
                            size_t dim,
                            double *out);

// Risk-optimal plug-in bandwidth for the level set at `level`; writes
// `dim` entries to `h_out`.
//
// # Safety
// `sample` must be a live handle; `h_out` must hold `h_cap` values.
enum LsbwStatus lsbw_select_optimal(const struct LsbwSample *sample,
                                    double level,
                                    enum LsbwKernel kernel,
                                    double *h_out,
                                    size_t h_cap);

// Least-squares cross-validation bandwidth; writes `dim` entries.
//
// # Safety
// `sample` must be a live handle; `h_out` must hold `h_cap` values.
enum LsbwStatus lsbw_select_lscv(const struct LsbwSample *sample,
                                 enum LsbwKernel kernel,
                                 double *h_out,
                                 size_t h_cap);

// Wilcoxon signed-rank test on `n` paired differences.
//
// # Safety
// `differences` must hold `n` values; `out` must be writable.
enum LsbwStatus lsbw_wilcoxon(const double *differences, size_t n, struct LsbwWilcoxon *out);

// Runs an experiment described by TOML text (the `simulate --config`
// format). Result files are not written.
//
// # Safety
// `config_toml` must be a NUL-terminated string; `out` must be writable.
enum LsbwStatus lsbw_experiment_run(const char *config_toml, struct LsbwExperiment **out);

// Number of levels in the experiment, or 0 for NULL.
//
// # Safety
// `exp` must be a live handle or NULL.
size_t lsbw_experiment_levels(const struct LsbwExperiment *exp);

// Summary of level `index` (in configuration order).
//
// # Safety
// `exp` must be a live handle; `out` must be writable.
enum LsbwStatus lsbw_experiment_summary(const struct LsbwExperiment *exp,
                                        size_t index,
                                        struct LsbwSummary *out);

// Error ratio `e_lscv / e_opt` of replication `rep` at level `index`;
// NaN when the replication has no ratio.
//
// # Safety
// `exp` must be a live handle; `out` must be writable.
enum LsbwStatus lsbw_experiment_ratio(const struct LsbwExperiment *exp,
                                      size_t index,
                                      size_t rep,
                                      double *out);

// # Safety
// `exp` must be a live handle or NULL.
void lsbw_experiment_free(struct LsbwExperiment *exp);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LSBW_H */

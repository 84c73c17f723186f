/* C interface for the mgising library. */

#ifndef MGISING_H
#define MGISING_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum MgiStatus {
  MgiOk = 0,
  MgiErrNullPointer = 1,
  MgiErrInvalidArgument = 2,
  MgiErrDimensionMismatch = 3,
  MgiErrEnumerationLimit = 4,
  MgiErrNumeric = 5,
  MgiErrNoConvergence = 6,
  MgiErrIo = 7,
  MgiErrParse = 8,
  MgiErrInternal = 9,
} MgiStatus;

/**
 * The result of one online fit.
 */
typedef struct MgiFit MgiFit;

/**
 * A graph matrix (canonical parameter rows x graph columns).
 */
typedef struct MgiGraphs MgiGraphs;

/**
 * A binary raster (time bins x nodes).
 */
typedef struct MgiRaster MgiRaster;

/**
 * Options for [`mgi_fit_run`]. Initialize with [`mgi_fit_options_default`].
 */
typedef struct MgiFitOptions {
  uintptr_t num_graphs;
  double lambda;
  double epsilon;
  uintptr_t mc_samples;
  uint64_t seed;
  bool scale_columns;
  bool compensate_state;
  double prior_mean;
  double prior_var;
  /**
   * 0 disables snapshots.
   */
  uintptr_t snapshot_every;
} MgiFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string of the library; static storage, do not free.
 */
const char *mgi_version(void);

/**
 * Message of the most recent error on this thread, or NULL if none. The
 * caller frees it with [`mgi_string_free`].
 */
char *mgi_last_error_message(void);

/**
 * Free a string returned by this library. NULL is accepted.
 *
 * # Safety
 * `s` must have been returned by a function of this library and not yet
 * freed.
 */
void mgi_string_free(char *s);

/**
 * Read a raster CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MgiStatus mgi_raster_read_csv(const char *path, struct MgiRaster **out);

/**
 * Build a raster from row-major 0/1 bytes (`bins` rows of `nodes` entries).
 *
 * # Safety
 * `data` must point to `bins * nodes` readable bytes; `out` must be valid.
 */
enum MgiStatus mgi_raster_new(const uint8_t *data,
                              uintptr_t bins,
                              uintptr_t nodes,
                              struct MgiRaster **out);

/**
 * # Safety
 * `raster` must be a live handle from this library (or NULL).
 */
void mgi_raster_free(struct MgiRaster *raster);

/**
 * Number of time bins; 0 on NULL.
 *
 * # Safety
 * `raster` must be a live handle or NULL.
 */
uintptr_t mgi_raster_len(const struct MgiRaster *raster);

/**
 * Number of nodes; 0 on NULL.
 *
 * # Safety
 * `raster` must be a live handle or NULL.
 */
uintptr_t mgi_raster_node_count(const struct MgiRaster *raster);

/**
 * Write a raster to CSV.
 *
 * # Safety
 * `raster` must be a live handle; `path` a NUL-terminated string.
 */
enum MgiStatus mgi_raster_write_csv(const struct MgiRaster *raster, const char *path);

/**
 * Read a graph matrix CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MgiStatus mgi_graphs_read_csv(const char *path, struct MgiGraphs **out);

/**
 * Write a graph matrix to CSV.
 *
 * # Safety
 * `graphs` must be a live handle; `path` a NUL-terminated string.
 */
enum MgiStatus mgi_graphs_write_csv(const struct MgiGraphs *graphs, const char *path);

/**
 * Build a graph matrix from column-major values: `param_dim(node_count)`
 * rows by `graph_count` columns.
 *
 * # Safety
 * `values` must point to `param_dim(node_count) * graph_count` readable
 * doubles; `out` must be valid.
 */
enum MgiStatus mgi_graphs_new(uintptr_t node_count,
                              uintptr_t graph_count,
                              const double *values,
                              struct MgiGraphs **out);

/**
 * Graph matrix with i.i.d. standard normal entries.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MgiStatus mgi_graphs_random(uintptr_t node_count,
                                 uintptr_t graph_count,
                                 uint64_t seed,
                                 struct MgiGraphs **out);

/**
 * The bundled 9-node demonstration pair (plus sign and letter T).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MgiStatus mgi_graphs_plus_t(struct MgiGraphs **out);

/**
 * # Safety
 * `graphs` must be a live handle from this library (or NULL).
 */
void mgi_graphs_free(struct MgiGraphs *graphs);

/**
 * Nodes per graph; 0 on NULL.
 *
 * # Safety
 * `graphs` must be a live handle or NULL.
 */
uintptr_t mgi_graphs_node_count(const struct MgiGraphs *graphs);

/**
 * Parameter rows per graph; 0 on NULL.
 *
 * # Safety
 * `graphs` must be a live handle or NULL.
 */
uintptr_t mgi_graphs_param_dim(const struct MgiGraphs *graphs);

/**
 * Number of graph columns; 0 on NULL.
 *
 * # Safety
 * `graphs` must be a live handle or NULL.
 */
uintptr_t mgi_graphs_count(const struct MgiGraphs *graphs);

/**
 * Copy the matrix out in column-major order.
 *
 * # Safety
 * `graphs` must be a live handle; `values` must point to
 * `param_dim * graph_count` writable doubles.
 */
enum MgiStatus mgi_graphs_copy_values(const struct MgiGraphs *graphs, double *values);

/**
 * Cosine similarity between column `col_a` of `a` and column `col_b` of `b`.
 *
 * # Safety
 * `a` and `b` must be live handles; `out` must be valid.
 */
enum MgiStatus mgi_column_correlation(const struct MgiGraphs *a,
                                      uintptr_t col_a,
                                      const struct MgiGraphs *b,
                                      uintptr_t col_b,
                                      double *out);

/**
 * Exact samples from the weighted model, written row-major into `out`
 * (`count` rows of `node_count` 0/1 bytes). Deterministic given the seed.
 *
 * # Safety
 * `graphs` must be a live handle, `theta` must point to `graph_count`
 * doubles, and `out` to `count * node_count` writable bytes.
 */
enum MgiStatus mgi_sample_patterns(const struct MgiGraphs *graphs,
                                   const double *theta,
                                   uintptr_t count,
                                   uint64_t seed,
                                   uint8_t *out);

/**
 * Log normalizer of the weighted model.
 *
 * # Safety
 * `graphs` must be a live handle, `theta` must point to `graph_count`
 * doubles, `out` must be valid.
 */
enum MgiStatus mgi_log_partition(const struct MgiGraphs *graphs, const double *theta, double *out);

/**
 * Defaults mirroring the CLI: lambda 1000, epsilon 1e-3, 100 posterior
 * samples, column rescaling with state compensation.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MgiStatus mgi_fit_options_default(struct MgiFitOptions *out);

/**
 * Run the online fit on a raster. `init` may be NULL for the default random
 * standard-normal initialization from the seed.
 *
 * # Safety
 * `raster` must be a live handle, `options` a valid pointer, `init` a live
 * handle or NULL, `out` a valid pointer.
 */
enum MgiStatus mgi_fit_run(const struct MgiRaster *raster,
                           const struct MgiFitOptions *options,
                           const struct MgiGraphs *init,
                           struct MgiFit **out);

/**
 * # Safety
 * `fit` must be a live handle from this library (or NULL).
 */
void mgi_fit_free(struct MgiFit *fit);

/**
 * Number of fitted time bins; 0 on NULL.
 *
 * # Safety
 * `fit` must be a live handle or NULL.
 */
uintptr_t mgi_fit_len(const struct MgiFit *fit);

/**
 * Number of graphs in the fit; 0 on NULL.
 *
 * # Safety
 * `fit` must be a live handle or NULL.
 */
uintptr_t mgi_fit_graph_count(const struct MgiFit *fit);

/**
 * One trace row by 0-based index: filtered mean, filtered variance diagonal
 * (each `graph_count` doubles) and the per-step marginal log-likelihood.
 * Any out-pointer may be NULL to skip that field.
 *
 * # Safety
 * `fit` must be a live handle; non-NULL out-pointers must have room for
 * `graph_count` doubles (`loglik`: one double).
 */
enum MgiStatus mgi_fit_trace_row(const struct MgiFit *fit,
                                 uintptr_t row,
                                 double *mean,
                                 double *variance,
                                 double *loglik);

/**
 * Clone the final learned graphs out of a fit.
 *
 * # Safety
 * `fit` must be a live handle, `out` a valid pointer.
 */
enum MgiStatus mgi_fit_final_graphs(const struct MgiFit *fit, struct MgiGraphs **out);

/**
 * Write the fit trace as CSV.
 *
 * # Safety
 * `fit` must be a live handle; `path` a NUL-terminated string.
 */
enum MgiStatus mgi_fit_write_trace_csv(const struct MgiFit *fit, const char *path);

/**
 * Sum of the per-step marginal log-likelihoods over the evaluation window:
 * the last `epoch_len` bins, or the latter half when `epoch_len` is 0.
 *
 * # Safety
 * `fit` must be a live handle, `out` a valid pointer.
 */
enum MgiStatus mgi_fit_window_loglik(const struct MgiFit *fit, uintptr_t epoch_len, double *out);

/**
 * Akaike information criterion: -2 loglik + 2 m.
 */
double mgi_aic(double window_loglik, uintptr_t free_params);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MGISING_H */

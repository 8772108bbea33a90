#ifndef POLYADS_H
#define POLYADS_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PolyadsStatus {
  POLYADS_STATUS_OK = 0,
  POLYADS_STATUS_NULL_POINTER = 1,
  POLYADS_STATUS_INVALID_ARGUMENT = 2,
  POLYADS_STATUS_DIMENSION_MISMATCH = 3,
  POLYADS_STATUS_INVALID_GRAPH = 4,
  POLYADS_STATUS_MISSING_COVARIATES = 5,
  POLYADS_STATUS_COLLINEAR_FEATURES = 6,
  POLYADS_STATUS_RESOURCE_GUARD = 7,
  /**
   * The fit handle is still returned, without covariance estimates.
   */
  POLYADS_STATUS_NOT_CONVERGED = 8,
  /**
   * The requested estimate was not computed (see the error message).
   */
  POLYADS_STATUS_UNAVAILABLE = 9,
  POLYADS_STATUS_INTERNAL = 10,
  POLYADS_STATUS_PANIC = 11,
} PolyadsStatus;

/**
 * Which sandwich estimate an accessor reads.
 */
typedef enum PolyadsSandwich {
  /**
   * Meat from squared per-edge scores.
   */
  POLYADS_SANDWICH_EDGE_SCORE = 0,
  /**
   * Meat from pairs of polyads sharing an edge.
   */
  POLYADS_SANDWICH_SHARED_EDGE = 1,
} PolyadsSandwich;

/**
 * Covariate provider handle.
 */
typedef struct PolyadsCovariates PolyadsCovariates;

/**
 * Fitted model handle.
 */
typedef struct PolyadsFit PolyadsFit;

/**
 * Count graph handle.
 */
typedef struct PolyadsGraph PolyadsGraph;

typedef struct PolyadsFitConfig {
  size_t max_iterations;
  double gradient_tolerance;
  uint64_t truncation_l;
  double ridge_epsilon;
  bool damped;
  double ci_level;
  uint64_t max_pair_work;
  size_t max_records;
} PolyadsFitConfig;

/**
 * Fills `out[0..p]` with the features of the edge `coords[0..d]` (1-based
 * node labels). Returns `false` when the edge has no covariates. May be
 * called concurrently from several threads.
 */
typedef bool (*PolyadsCovariateCallback)(void *user_data,
                                         const uint32_t *coords,
                                         size_t d,
                                         double *out,
                                         size_t p);

typedef struct PolyadsMetaResult {
  double pooled;
  double se;
  double ci_lower;
  double ci_upper;
  double tau2;
  /**
   * `false` when the Paule–Mandel iteration failed and the
   * DerSimonian–Laird moment estimate was used.
   */
  bool paule_mandel;
  size_t iterations;
} PolyadsMetaResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last error on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *polyads_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *polyads_version(void);

struct PolyadsFitConfig polyads_fit_config_default(void);

/**
 * Builds a count graph from `n_edges` edges. `coords` holds `n_edges × d`
 * 1-based node labels, edge by edge; `counts` holds the positive counts.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` must be writable.
 */
enum PolyadsStatus polyads_graph_new(size_t d,
                                     const uint32_t *dims,
                                     size_t n_edges,
                                     const uint32_t *coords,
                                     const uint64_t *counts,
                                     struct PolyadsGraph **out);

/**
 * # Safety
 * `graph` must be null or a handle from [`polyads_graph_new`] not yet freed.
 */
void polyads_graph_free(struct PolyadsGraph *graph);

/**
 * Number of positive edges, or 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live graph handle.
 */
size_t polyads_graph_num_edges(const struct PolyadsGraph *graph);

/**
 * Dense covariates on the full grid. `values` holds `p` features per cell,
 * cells in row-major order of their 1-based labels (last dimension fastest).
 *
 * # Safety
 * `dims` must hold `d` entries and `values` `p × Π dims` entries.
 */
enum PolyadsStatus polyads_covariates_dense(size_t d,
                                            const uint32_t *dims,
                                            size_t p,
                                            const double *values,
                                            struct PolyadsCovariates **out);

/**
 * Covariates computed on demand by `callback`.
 *
 * # Safety
 * `callback` and `user_data` must stay valid and thread-safe until the
 * handle is freed.
 */
enum PolyadsStatus polyads_covariates_from_callback(size_t p,
                                                    PolyadsCovariateCallback callback,
                                                    void *user_data,
                                                    struct PolyadsCovariates **out);

/**
 * # Safety
 * `cov` must be null or a covariate handle not yet freed.
 */
void polyads_covariates_free(struct PolyadsCovariates *cov);

/**
 * Enumerates active polyads, runs Newton from zero and computes both
 * sandwich estimates. On `NotConverged` the handle is still written and
 * carries the last iterate but no covariance. A null `config` uses the
 * defaults.
 *
 * # Safety
 * `graph` and `cov` must be live handles; `config` null or valid; `out`
 * writable.
 */
enum PolyadsStatus polyads_fit(const struct PolyadsGraph *graph,
                               const struct PolyadsCovariates *cov,
                               const struct PolyadsFitConfig *config,
                               struct PolyadsFit **out);

/**
 * # Safety
 * `fit` must be null or a fit handle not yet freed.
 */
void polyads_fit_free(struct PolyadsFit *fit);

/**
 * Number of features, or 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live fit handle.
 */
size_t polyads_fit_num_features(const struct PolyadsFit *fit);

/**
 * # Safety
 * `fit` must be null or a live fit handle.
 */
bool polyads_fit_converged(const struct PolyadsFit *fit);

/**
 * # Safety
 * `fit` must be null or a live fit handle.
 */
size_t polyads_fit_newton_steps(const struct PolyadsFit *fit);

/**
 * Loss at the returned coefficients, NaN for a null handle.
 *
 * # Safety
 * `fit` must be null or a live fit handle.
 */
double polyads_fit_loss(const struct PolyadsFit *fit);

/**
 * Number of canonical active polyads.
 *
 * # Safety
 * `fit` must be null or a live fit handle.
 */
size_t polyads_fit_num_polyads(const struct PolyadsFit *fit);

/**
 * Copies the `p` coefficients into `out`.
 *
 * # Safety
 * `fit` must be a live fit handle and `out` valid for `len` writes.
 */
enum PolyadsStatus polyads_fit_beta(const struct PolyadsFit *fit, double *out, size_t len);

/**
 * Copies the `p × p` covariance matrix (row-major) into `out`.
 *
 * # Safety
 * `fit` must be a live fit handle and `out` valid for `len` writes.
 */
enum PolyadsStatus polyads_fit_covariance(const struct PolyadsFit *fit,
                                          enum PolyadsSandwich which,
                                          double *out,
                                          size_t len);

/**
 * Copies the per-coefficient interval bounds into `lower` and `upper`.
 *
 * # Safety
 * `fit` must be a live fit handle; `lower` and `upper` valid for `len`
 * writes.
 */
enum PolyadsStatus polyads_fit_ci(const struct PolyadsFit *fit,
                                  enum PolyadsSandwich which,
                                  double *lower,
                                  double *upper,
                                  size_t len);

/**
 * Random-effects pooling of `k` estimates with their variances.
 *
 * # Safety
 * `betas` and `variances` must hold `k` entries; `out` must be writable.
 */
enum PolyadsStatus polyads_meta_analysis(size_t k,
                                         const double *betas,
                                         const double *variances,
                                         struct PolyadsMetaResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLYADS_H */

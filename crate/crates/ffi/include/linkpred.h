#ifndef LINKPRED_H
#define LINKPRED_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum LpStatus {
  LP_STATUS_OK = 0,
  LP_STATUS_NULL_POINTER = 1,
  LP_STATUS_INVALID_ARGUMENT = 2,
  LP_STATUS_CONFIG = 3,
  LP_STATUS_DATA = 4,
  LP_STATUS_NUMERICAL = 5,
  LP_STATUS_PANIC = 6,
} LpStatus;

// Which methods [`lp_run_experiment`] trains and evaluates.
typedef enum LpPlan {
  // Configured variant plus baselines.
  LP_PLAN_EVALUATE = 0,
  // Configured variant only.
  LP_PLAN_TRAIN = 1,
  // Every ablation variant plus baselines.
  LP_PLAN_ABLATE = 2,
  // Baselines only.
  LP_PLAN_BASELINES = 3,
} LpPlan;

// Experiment configuration.
typedef struct LpConfig LpConfig;

// Snapshot-`t` graph.
typedef struct LpGraph LpGraph;

// Finished experiment run.
typedef struct LpRun LpRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty when none failed.
// The pointer stays valid until the next failing call on the same thread.
const char *lp_last_error_message(void);

// Builds a graph over nodes `0..node_count` from `edge_count` directed
// edges `src[i] -> dst[i]`.
//
// # Safety
// `src` and `dst` must point to `edge_count` readable values; `out` must be
// writable.
enum LpStatus lp_graph_new(uintptr_t node_count,
                           const uintptr_t *src,
                           const uintptr_t *dst,
                           uintptr_t edge_count,
                           struct LpGraph **out);

// # Safety
// `graph` must come from [`lp_graph_new`] and not be used afterwards.
void lp_graph_free(struct LpGraph *graph);

// # Safety
// `graph` must be a live handle and `out` writable.
enum LpStatus lp_graph_node_count(const struct LpGraph *graph, uintptr_t *out);

// Shared neighbours of `u` and `q` in the symmetrized graph.
//
// # Safety
// `graph` must be a live handle and `out` writable.
enum LpStatus lp_common_neighbors(const struct LpGraph *graph,
                                  uintptr_t u,
                                  uintptr_t q,
                                  uintptr_t *out);

// PageRank of every node into `out[0..len]`; `len` must equal the node
// count.
//
// # Safety
// `graph` must be a live handle and `out` must hold `len` writable values.
enum LpStatus lp_pagerank(const struct LpGraph *graph, double damping, double *out, uintptr_t len);

// Dense row-major `D^-1/2 (A + I) D^-1/2` into `out[0..len]`, with
// `len = N * N`.
//
// # Safety
// `graph` must be a live handle and `out` must hold `len` writable values.
enum LpStatus lp_normalized_adjacency(const struct LpGraph *graph, double *out, uintptr_t len);

// Exact AUC over every positive/negative pair (ties count one half).
//
// # Safety
// Score pointers must hold the stated counts; `out` must be writable.
enum LpStatus lp_auc_exact(const double *pos,
                           uintptr_t n_pos,
                           const double *neg,
                           uintptr_t n_neg,
                           double *out);

// AUC estimated from `samples` seeded positive/negative draws.
//
// # Safety
// Score pointers must hold the stated counts; `out` must be writable.
enum LpStatus lp_auc_sampled(const double *pos,
                             uintptr_t n_pos,
                             const double *neg,
                             uintptr_t n_neg,
                             uintptr_t samples,
                             uint64_t seed,
                             double *out);

// Kolmogorov-Smirnov statistic of the two score samples.
//
// # Safety
// Score pointers must hold the stated counts; `out` must be writable.
enum LpStatus lp_ks_statistic(const double *pos,
                              uintptr_t n_pos,
                              const double *neg,
                              uintptr_t n_neg,
                              double *out);

// NDCG@K of a ranking given as relevance flags (non-zero = relevant) in
// rank order.
//
// # Safety
// `relevance` must hold `len` values; `out` must be writable.
enum LpStatus lp_ndcg_at_k(const uint8_t *relevance, uintptr_t len, uintptr_t k, double *out);

// AP@K of a ranking given as relevance flags in rank order.
//
// # Safety
// `relevance` must hold `len` values; `out` must be writable.
enum LpStatus lp_map_at_k(const uint8_t *relevance,
                          uintptr_t len,
                          uintptr_t k,
                          uintptr_t test_size,
                          double *out);

// Default configuration (synthetic data).
//
// # Safety
// `out` must be writable.
enum LpStatus lp_config_new(struct LpConfig **out);

// Configuration read from a `key = value` file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum LpStatus lp_config_from_file(const char *path, struct LpConfig **out);

// Sets one configuration key, as in a config file line.
//
// # Safety
// `config` must be a live handle; `key` and `value` NUL-terminated strings.
enum LpStatus lp_config_set(struct LpConfig *config, const char *key, const char *value);

// # Safety
// `config` must come from this library and not be used afterwards.
void lp_config_free(struct LpConfig *config);

// Runs an experiment and writes its outputs under `out_root`.
//
// # Safety
// `config` must be a live handle, `out_root` a NUL-terminated string and
// `out` writable.
enum LpStatus lp_run_experiment(const struct LpConfig *config,
                                enum LpPlan plan,
                                const char *out_root,
                                struct LpRun **out);

// Report text of a run; owned by the handle.
//
// # Safety
// `run` must be a live handle.
const char *lp_run_report(const struct LpRun *run);

// Output directory of a run; owned by the handle.
//
// # Safety
// `run` must be a live handle.
const char *lp_run_dir(const struct LpRun *run);

// Mean of `metric` (`auc`, `ks`, `ndcg`, `map`) for `method` over the
// run's repeats. `k` is ignored for `auc` and `ks`.
//
// # Safety
// `run` must be a live handle; strings NUL-terminated; `out` writable.
enum LpStatus lp_run_metric_mean(const struct LpRun *run,
                                 const char *method,
                                 const char *metric,
                                 uintptr_t k,
                                 double *out);

// # Safety
// `run` must come from [`lp_run_experiment`] and not be used afterwards.
void lp_run_free(struct LpRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LINKPRED_H */

#ifndef CMATCH_H
#define CMATCH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CmArm {
  CM_ARM_CONTROL = 0,
  CM_ARM_TREATED = 1,
  CM_ARM_EXCLUDED = 2,
} CmArm;

typedef enum CmStatus {
  CM_STATUS_OK = 0,
  CM_STATUS_NULL_POINTER = 1,
  CM_STATUS_INVALID_ARGUMENT = 2,
  CM_STATUS_IO = 3,
  CM_STATUS_PARSE = 4,
  CM_STATUS_INVALID_GRAPH = 5,
  CM_STATUS_MISSING_FEATURES = 6,
  CM_STATUS_MISSING_WEIGHTS = 7,
  CM_STATUS_INCOMPATIBLE_SCHEMES = 8,
  CM_STATUS_EMPTY_ARM = 9,
  CM_STATUS_CONFIG = 10,
  CM_STATUS_OUT_OF_RANGE = 11,
  CM_STATUS_INTERNAL = 12,
  CM_STATUS_PANIC = 13,
} CmStatus;

// Opaque design handle: the planned structure plus the assignment drawn
// from it.
typedef struct CmDesign CmDesign;

// Opaque graph handle.
typedef struct CmGraph CmGraph;

// Aggregate metrics of a simulated evaluation. Values that do not apply
// (no edge weights, no features) are NaN.
typedef struct CmMetrics {
  uint64_t runs;
  double true_tte;
  double mean_estimate;
  double rmse;
  double covariate_distance;
  double crossing_edge_fraction;
  double crossing_weight_fraction;
  double theta_hat;
  uint64_t treated_count;
  uint64_t control_count;
  uint64_t excluded_count;
} CmMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next cmatch call on the same thread.
const char *cm_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *cm_version(void);

// Generates a stochastic block model graph with one-hot block attributes
// and similarity edge weights (L2-based).
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum CmStatus cm_graph_generate_sbm(size_t blocks,
                                    size_t block_size,
                                    double p_in,
                                    double p_out,
                                    double attr_noise,
                                    uint64_t seed,
                                    struct CmGraph **out);

// Loads an edge list and an optional attribute CSV (`attributes` may be
// null). Node indices follow the lexicographic order of the node ids.
//
// # Safety
// `edges` and a non-null `attributes` must be NUL-terminated strings; `out`
// must be writable.
enum CmStatus cm_graph_load(const char *edges, const char *attributes, struct CmGraph **out);

// # Safety
// `graph` must be null or a handle from a `cm_graph_*` constructor that has
// not been freed.
void cm_graph_free(struct CmGraph *graph);

// Node count, or 0 for a null handle.
//
// # Safety
// `graph` must be null or a live handle.
size_t cm_graph_node_count(const struct CmGraph *graph);

// Edge count, or 0 for a null handle.
//
// # Safety
// `graph` must be null or a live handle.
size_t cm_graph_edge_count(const struct CmGraph *graph);

// Replaces the edge weights with endpoint similarity under `metric`
// ("l2", "cosine" or "jaccard"; null means "l2").
//
// # Safety
// `graph` must be a live handle; a non-null `metric` must be NUL-terminated.
enum CmStatus cm_graph_annotate(struct CmGraph *graph, const char *metric_name);

// Plans a design from a JSON design config such as
// `{"method": "cmatch", "cluster_weight": "mss"}` (null or "{}" for the
// defaults) and draws its first assignment.
//
// # Safety
// `graph` must be a live handle, string arguments null or NUL-terminated,
// `out` writable.
enum CmStatus cm_design_from_json(const struct CmGraph *graph,
                                  const char *config_json,
                                  const char *metric_name,
                                  uint64_t seed,
                                  struct CmDesign **out);

// # Safety
// `design` must be null or a live handle from `cm_design_from_json`.
void cm_design_free(struct CmDesign *design);

// Arm of one node in the drawn assignment.
//
// # Safety
// `design` must be a live handle and `out` writable.
enum CmStatus cm_design_arm(const struct CmDesign *design, size_t node, enum CmArm *out);

// Copies every node's arm into `out`, which must hold `len` entries;
// `len` must equal the node count.
//
// # Safety
// `design` must be a live handle and `out` valid for `len` writes.
enum CmStatus cm_design_arms(const struct CmDesign *design, enum CmArm *out, size_t len);

// Cluster count of the design, or 0 for a null handle.
//
// # Safety
// `design` must be null or a live handle.
size_t cm_design_cluster_count(const struct CmDesign *design);

// Simulates `runs` outcome rounds and evaluates them. Each run draws a
// fresh assignment from the design, so run 0 uses the assignment reported
// by `cm_design_arm`. `simulation_json` is an outcome config such as
// `{"interference": "direct", "ep": 0.1, "runs": 20}` (null for defaults).
//
// # Safety
// `graph` and `design` must be live handles, `simulation_json` null or
// NUL-terminated, `out` writable.
enum CmStatus cm_evaluate(const struct CmGraph *graph,
                          const struct CmDesign *design,
                          const char *simulation_json,
                          struct CmMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CMATCH_H */

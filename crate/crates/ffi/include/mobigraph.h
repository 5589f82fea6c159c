#ifndef MOBIGRAPH_H
#define MOBIGRAPH_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible FFI function.
 */
typedef enum MgStatus {
  /**
   * Success.
   */
  MG_STATUS_OK = 0,
  /**
   * A pointer argument was null.
   */
  MG_STATUS_ERR_NULL_POINTER = 1,
  /**
   * Invalid input data or configuration.
   */
  MG_STATUS_ERR_DATA = 2,
  /**
   * Numerical failure (non-finite values, divergence).
   */
  MG_STATUS_ERR_NUMERICAL = 3,
  /**
   * A string argument was not valid UTF-8.
   */
  MG_STATUS_ERR_UTF8 = 4,
} MgStatus;

/**
 * Opaque handle to a mobility graph.
 */
typedef struct MgGraph MgGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the message for the last error raised on this thread. The
 * pointer stays valid until the next failing call on the same thread; do
 * not free it.
 */
const char *mg_last_error(void);

/**
 * Parses a graph JSON document into a new handle.
 *
 * # Safety
 * `json` must point to a NUL-terminated string and `out` to a writable
 * pointer slot.
 */
enum MgStatus mg_graph_from_json(const char *json, struct MgGraph **out);

/**
 * Serializes a graph handle back to its JSON document.
 *
 * # Safety
 * `graph` must be a live handle from this library and `out_json` a
 * writable pointer slot; the returned string must be freed with
 * `mg_string_free`.
 */
enum MgStatus mg_graph_to_json(const struct MgGraph *graph, char **out_json);

/**
 * Number of nodes in the graph, or 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle from this library.
 */
uintptr_t mg_graph_node_count(const struct MgGraph *graph);

/**
 * Frobenius distance between the adjacency matrices of two graphs of
 * equal size.
 *
 * # Safety
 * Both handles must be live and `out` writable.
 */
enum MgStatus mg_graph_distance(const struct MgGraph *g1, const struct MgGraph *g2, double *out);

/**
 * Runs the graph matcher on two handles (padding with null nodes when the
 * sizes differ) and returns the match result as a JSON document.
 *
 * # Safety
 * Both handles must be live and `out_json` a writable pointer slot; the
 * returned string must be freed with `mg_string_free`.
 */
enum MgStatus mg_match_json(const struct MgGraph *g1,
                            const struct MgGraph *g2,
                            double lambda,
                            uintptr_t restarts,
                            uint64_t seed,
                            char **out_json);

/**
 * Releases a graph handle; null is a no-op.
 *
 * # Safety
 * `graph` must be null or a handle not yet freed.
 */
void mg_graph_free(struct MgGraph *graph);

/**
 * Releases a string returned by this library; null is a no-op.
 *
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void mg_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MOBIGRAPH_H */

#ifndef URBANNAV_H
#define URBANNAV_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define UN_OK 0

/*
 A required pointer argument was NULL.
 */
#define UN_ERR_NULL 1

/*
 A string argument was not valid UTF-8.
 */
#define UN_ERR_UTF8 2

/*
 A file could not be read or parsed, or an episode could not start.
 */
#define UN_ERR_INVALID_INPUT 3

/*
 A node id is not in the graph.
 */
#define UN_ERR_NOT_FOUND 4

/*
 A numeric argument is out of range.
 */
#define UN_ERR_RANGE 5

/*
 The library panicked; the handle involved should not be reused.
 */
#define UN_ERR_PANIC 6

/*
 Returned by `un_graph_topo_distance` when the target is unreachable.
 */
#define UN_UNREACHABLE -1

#define UN_TERMINATION_STOPPED 0

#define UN_TERMINATION_STEP_CAP 1

#define UN_TERMINATION_ERROR 2

/*
 Opaque navigation graph.
 */
typedef struct UnGraph UnGraph;

/*
 Opaque task suite.
 */
typedef struct UnTasks UnTasks;

/*
 Metrics of one episode.
 */
typedef struct UnEpisodeMetrics {
  /*
   One of the `UN_TERMINATION_*` values.
   */
  int termination;
  bool tce;
  bool tcp_50m;
  bool tcc;
  double spl;
  double spd_m;
  double ndtw;
  uint32_t steps;
} UnEpisodeMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the most recent failure on this thread, or NULL.
 */
const char *un_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *un_version(void);

/*
 Load a graph JSON file.

 # Safety
 `path` must be NULL or a NUL-terminated string; `out` must be NULL or
 valid for writes.
 */
int un_graph_load(const char *path, struct UnGraph **out_graph);

/*
 Release a graph.

 # Safety
 `graph` must be NULL or a handle from `un_graph_load` not yet freed.
 */
void un_graph_free(struct UnGraph *graph);

/*
 # Safety
 `graph` must be NULL or a live handle; `out_count` NULL or writable.
 */
int un_graph_node_count(const struct UnGraph *graph, size_t *out_count);

/*
 # Safety
 `graph` must be NULL or a live handle; `out_count` NULL or writable.
 */
int un_graph_edge_count(const struct UnGraph *graph, size_t *out_count);

/*
 Minimum hop count between two nodes, or `UN_UNREACHABLE`.

 # Safety
 Pointers must be NULL or valid; strings NUL-terminated.
 */
int un_graph_topo_distance(const struct UnGraph *graph,
                           const char *from,
                           const char *to,
                           int64_t *out_hops);

/*
 Great-circle distance in meters between two points in degrees.

 # Safety
 `out_m` must be NULL or writable.
 */
int un_geodesic_distance(double lat1, double lon1, double lat2, double lon2, double *out_m);

/*
 Load a task suite JSON file.

 # Safety
 As for `un_graph_load`.
 */
int un_tasks_load(const char *path, struct UnTasks **out_tasks);

/*
 Release a task suite.

 # Safety
 `tasks` must be NULL or a handle from `un_tasks_load` not yet freed.
 */
void un_tasks_free(struct UnTasks *tasks);

/*
 # Safety
 `tasks` must be NULL or a live handle; `out_count` NULL or writable.
 */
int un_tasks_count(const struct UnTasks *tasks, size_t *out_count);

/*
 Run the shortest-path oracle on task `index` and report its metrics.

 # Safety
 Handles must be NULL or live; `out_metrics` NULL or writable.
 */
int un_run_oracle_episode(const struct UnGraph *graph,
                          const struct UnTasks *tasks,
                          size_t index,
                          struct UnEpisodeMetrics *out_metrics);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* URBANNAV_H */

#ifndef POSEGRAPH_H
#define POSEGRAPH_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PgStatus {
  PG_STATUS_OK = 0,
  PG_STATUS_NULL_POINTER = 1,
  PG_STATUS_INVALID_ARGUMENT = 2,
  PG_STATUS_IO = 3,
  PG_STATUS_CONFIG = 4,
  PG_STATUS_NO_MODEL = 5,
  PG_STATUS_OUT_OF_RANGE = 6,
  PG_STATUS_PANIC = 7,
} PgStatus;

typedef struct PgConfig PgConfig;

typedef struct PgDataset PgDataset;

typedef struct PgResult PgResult;

typedef struct PgScene PgScene;

/**
 * Synthetic scene parameters; `arc_span_deg <= 0` places the cameras on a full ring.
 */
typedef struct PgSceneParams {
  uint64_t seed;
  size_t n_cameras;
  size_t n_points;
  double noise_px;
  double outlier_fraction;
  double arc_span_deg;
} PgSceneParams;

/**
 * Relative pose `X_j = R X_i + t`; `rotation` is row-major, `translation` unit-norm.
 */
typedef struct PgPose {
  double rotation[9];
  double translation[3];
} PgPose;

typedef struct PgSummary {
  size_t pairs;
  size_t walk;
  size_t ransac_fallback;
  size_t skipped;
  size_t edges;
  size_t tracks;
  double walk_success_rate;
} PgSummary;

typedef struct PgEdge {
  uint32_t source;
  uint32_t destination;
  struct PgPose pose;
  double quality;
} PgEdge;

typedef struct PgIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
} PgIntrinsics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null.
 */
const char *pg_last_error_message(void);

struct PgSceneParams pg_scene_params_default(void);

enum PgStatus pg_scene_generate(const struct PgSceneParams *params, struct PgScene **out);

size_t pg_scene_view_count(const struct PgScene *scene);

enum PgStatus pg_scene_ground_truth_pose(const struct PgScene *scene,
                                         uint32_t i,
                                         uint32_t j,
                                         struct PgPose *out);

void pg_scene_free(struct PgScene *scene);

enum PgStatus pg_dataset_from_scene(const struct PgScene *scene, struct PgDataset **out);

enum PgStatus pg_dataset_load(const char *dir, struct PgDataset **out);

/**
 * Writes the dataset into `dir`, as JSON when `json` is true and binary otherwise.
 */
enum PgStatus pg_dataset_write(const struct PgDataset *dataset, const char *dir, bool json);

size_t pg_dataset_view_count(const struct PgDataset *dataset);

void pg_dataset_free(struct PgDataset *dataset);

/**
 * Default pipeline configuration.
 */
struct PgConfig *pg_config_new(void);

/**
 * Sets one key of the plain-text configuration format, e.g. `lambda` to `0.7`.
 * The configuration is left unchanged when the result would be invalid.
 */
enum PgStatus pg_config_set(struct PgConfig *config, const char *key, const char *value);

/**
 * Applies a whole configuration text of `key = value` lines.
 */
enum PgStatus pg_config_apply_text(struct PgConfig *config, const char *text);

void pg_config_free(struct PgConfig *config);

enum PgStatus pg_build(const struct PgDataset *dataset,
                       const struct PgConfig *config,
                       struct PgResult **out);

enum PgStatus pg_result_summary(const struct PgResult *result, struct PgSummary *out);

enum PgStatus pg_result_edge(const struct PgResult *result, size_t index, struct PgEdge *out);

/**
 * Writes the pose-graph, the tracks and the CSV reports into `dir`.
 */
enum PgStatus pg_result_write(const struct PgResult *result, const char *dir);

void pg_result_free(struct PgResult *result);

/**
 * Robust relative pose from `n` pixel correspondences given as interleaved
 * `x, y` pairs, sampled in the given order. `inlier_count` may be null.
 */
enum PgStatus pg_estimate_pose(const double *points1,
                               const double *points2,
                               size_t n,
                               struct PgIntrinsics k1,
                               struct PgIntrinsics k2,
                               double threshold_px,
                               size_t max_iterations,
                               uint64_t seed,
                               struct PgPose *out,
                               size_t *inlier_count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POSEGRAPH_H */

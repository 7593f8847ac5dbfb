/*
 * Copyright 2026 The pillardet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the pillardet detector stack.
 *
 * Every object is an opaque handle released with its matching *_free call.
 * Functions return PD_OK or an error status; the message of the most recent
 * error on the calling thread is available from pd_last_error(). Strings
 * returned through char** out-parameters are heap copies owned by the caller
 * and must be released with pd_string_free().
 */

#ifndef PILLARDET_PILLARDET_H_
#define PILLARDET_PILLARDET_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PD_API __declspec(dllexport)
#else
#define PD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pd_status {
  PD_OK = 0,
  PD_ERR_INVALID_ARGUMENT = 1,
  PD_ERR_IO = 2,
  PD_ERR_PARSE = 3,
  PD_ERR_OUT_OF_RANGE = 4,
  PD_ERR_SHAPE_MISMATCH = 5,
  PD_ERR_INVARIANT = 6,
  PD_ERR_INTERNAL = 7
} pd_status;

typedef struct pd_profile pd_profile;
typedef struct pd_cloud pd_cloud;
typedef struct pd_model pd_model;

PD_API const char* pd_version(void);
PD_API const char* pd_last_error(void);
PD_API const char* pd_status_name(pd_status status);
PD_API void pd_string_free(char* s);

/* Profiles: "waymo" or "nuscenes", optionally overridden by a JSON file
 * (config_path may be NULL). Unknown keys in the file are errors. */
PD_API pd_status pd_profile_load(const char* name, const char* config_path, pd_profile** out);
PD_API pd_status pd_profile_to_json(const pd_profile* profile, char** out_json);
PD_API void pd_profile_free(pd_profile* profile);

/* Point clouds: little-endian float32 records (x, y, z, r, t) plus a
 * "<path>.meta.json" companion. */
PD_API pd_status pd_cloud_load(const char* path, pd_cloud** out);
PD_API pd_status pd_cloud_save(const pd_cloud* cloud, const char* path);
PD_API pd_status pd_cloud_from_points(const float* xyzrt, size_t count, pd_cloud** out);
PD_API size_t pd_cloud_size(const pd_cloud* cloud);
PD_API void pd_cloud_free(pd_cloud* cloud);

/* Synthetic scene. spec_json is an object with optional keys range
 * [x0,x1,y0,y1,z0,z1], num_objects, num_classes, points_per_object,
 * background_points, noise, ground_z, planted (array of box records).
 * Boxes come back as JSON lines. */
PD_API pd_status pd_generate(const char* spec_json, uint64_t seed, pd_cloud** out_cloud,
                             char** out_boxes_jsonl);

/* Models. init_kind: 0 random, 1 neutral (all-zero convolutions, neutral BN). */
PD_API pd_status pd_model_init(const pd_profile* profile, int init_kind, uint64_t seed,
                               pd_model** out);
PD_API pd_status pd_model_load(const char* manifest_path, pd_model** out);
PD_API pd_status pd_model_save(const pd_model* model, const char* manifest_path);
PD_API int pd_model_is_fused(const pd_model* model);
PD_API void pd_model_free(pd_model* model);

/* Fuses a train-mode model and compares both on `probes` random canvases.
 * Writes the max relative discrepancy. */
PD_API pd_status pd_model_fuse(const pd_model* train, int probes, uint64_t seed,
                               pd_model** out_fused, double* out_max_discrepancy);

/* Pillar summary JSON: point and pillar counts, grid size, occupancy
 * histogram and, when with_records is non-zero, [ix, iy, count] per pillar. */
PD_API pd_status pd_pillarize(const pd_cloud* cloud, const pd_profile* profile, int with_records,
                              char** out_json);

/* Per-pillar MAPE features as JSON lines {"ix","iy","points","feature"}. */
PD_API pd_status pd_encode(const pd_cloud* cloud, const pd_model* model,
                           const pd_profile* profile, char** out_jsonl);

/* MAC and parameter accounting for `count` stage ratios (4 ints each) at an
 * in_h x in_w canvas; non-positive extents select the profile grid. */
PD_API pd_status pd_flops(const pd_profile* profile, const int* ratios, size_t count, int in_h,
                          int in_w, char** out_json);

/* Detections as JSON lines. When inject_boxes_jsonl is non-NULL the network
 * is bypassed and those boxes are rendered into the head output instead.
 * out_report_json (may be NULL) receives counts and stage timings. */
PD_API pd_status pd_detect(const pd_cloud* cloud, const pd_model* model,
                           const pd_profile* profile, const char* inject_boxes_jsonl,
                           char** out_jsonl, char** out_report_json);

/* Per-stage latency rows {"stage","p50","p90","mean"} in milliseconds. */
PD_API pd_status pd_bench(const pd_model* model, const pd_profile* profile, int points,
                          int repeats, uint64_t seed, char** out_json);

/* Loss breakdown of the network's head output on `cloud` against the boxes,
 * before and after one gradient step of size lr on the head output. */
PD_API pd_status pd_train_step(const pd_cloud* cloud, const pd_model* model,
                               const pd_profile* profile, const char* boxes_jsonl, double lr,
                               char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* PILLARDET_PILLARDET_H_ */

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

#include "model/profile.hpp"

#include <fstream>
#include <set>

namespace pillardet::model {

using nlohmann::json;

dethead::HeadGeometry Profile::head_geometry() const {
  return dethead::HeadGeometry::from_grid(grid, head_stride);
}

dethead::DecodeOptions Profile::decode_options() const {
  dethead::DecodeOptions o;
  o.max_detections = max_detections;
  o.score_thresh = score_thresh;
  o.alpha = alpha;
  return o;
}

dethead::NmsOptions Profile::nms_options() const {
  dethead::NmsOptions o;
  o.iou_thresh = nms_iou;
  o.class_agnostic = class_agnostic;
  return o;
}

void Profile::validate() const {
  grid.validate();
  backbone.validate();
  loss_weights.validate();
  PD_CHECK(!class_names.empty(), ErrorCode::kInvalidArgument, "profile needs at least one class");
  auto per_class_ok = [&](const std::vector<double>& v, double lo, double hi, const char* what) {
    PD_CHECK(v.size() == 1 || v.size() == class_names.size(), ErrorCode::kInvalidArgument, what,
             " needs one entry or one per class");
    for (double x : v) {
      PD_CHECK(x >= lo && x <= hi, ErrorCode::kInvalidArgument, what, " value ", x,
               " outside [", lo, ", ", hi, "]");
    }
  };
  per_class_ok(alpha, 0.0, 1.0, "alpha");
  per_class_ok(nms_iou, 0.0, 1.0, "nms_iou");
  PD_CHECK(score_thresh >= 0.0 && score_thresh < 1.0, ErrorCode::kInvalidArgument,
           "score_thresh must lie in [0, 1)");
  PD_CHECK(max_detections > 0, ErrorCode::kInvalidArgument, "max_detections must be positive");
  PD_CHECK(mape_layers >= 1, ErrorCode::kInvalidArgument, "mape_layers must be >= 1");
  PD_CHECK(neck_channels >= 1, ErrorCode::kInvalidArgument, "neck_channels must be >= 1");
  PD_CHECK(head_stride == 4, ErrorCode::kInvalidArgument,
           "head_stride is fixed by the neck taps at 4, got ", head_stride);
}

Profile waymo_profile() {
  Profile p;
  p.name = "waymo";
  p.grid.range = Range3D{-75.2, 75.2, -75.2, 75.2, -2.0, 4.0};
  p.grid.pillar_x = p.grid.pillar_y = 0.2;
  p.class_names = {"vehicle", "pedestrian", "cyclist"};
  p.alpha = {0.68, 0.71, 0.65};
  p.nms_iou = {0.8, 0.55, 0.55};
  p.class_agnostic = false;
  p.score_thresh = 0.1;
  return p;
}

Profile nuscenes_profile() {
  Profile p;
  p.name = "nuscenes";
  p.grid.range = Range3D{-54.0, 54.0, -54.0, 54.0, -5.0, 3.0};
  p.grid.pillar_x = p.grid.pillar_y = 0.15;
  p.class_names = {"car",     "truck",      "construction_vehicle", "bus",        "trailer",
                   "barrier", "motorcycle", "bicycle",              "pedestrian", "traffic_cone"};
  p.alpha = {0.5};
  p.nms_iou = {0.2};
  p.class_agnostic = true;
  p.score_thresh = 0.2;
  return p;
}

Profile builtin_profile(const std::string& name) {
  if (name == "waymo") return waymo_profile();
  if (name == "nuscenes") return nuscenes_profile();
  fail(ErrorCode::kInvalidArgument, "unknown profile '", name, "' (expected waymo or nuscenes)");
}

namespace {

template <typename T>
T get(const json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, "profile key '", key, "': ", e.what());
  }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const char* where) {
  PD_CHECK(j.is_object(), ErrorCode::kParse, where, " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    PD_CHECK(allowed.count(k), ErrorCode::kParse, "unknown key '", k, "' in ", where);
  }
}

}  // namespace

Profile apply_overrides(Profile p, const json& o) {
  check_keys(o,
             {"name", "range", "pillar_size", "class_names", "alpha", "nms_iou", "class_agnostic",
              "score_thresh", "max_detections", "loss_weights", "backbone", "mape_layers",
              "neck_channels", "head_stride"},
             "profile");
  if (o.contains("name")) p.name = get<std::string>(o["name"], "name");
  if (o.contains("range")) {
    const auto r = get<std::vector<double>>(o["range"], "range");
    PD_CHECK(r.size() == 6, ErrorCode::kParse,
             "range needs [x_min, x_max, y_min, y_max, z_min, z_max]");
    p.grid.range = Range3D{r[0], r[1], r[2], r[3], r[4], r[5]};
  }
  if (o.contains("pillar_size")) {
    const auto s = get<std::vector<double>>(o["pillar_size"], "pillar_size");
    PD_CHECK(s.size() == 2, ErrorCode::kParse, "pillar_size needs [x, y]");
    p.grid.pillar_x = s[0];
    p.grid.pillar_y = s[1];
  }
  if (o.contains("class_names")) {
    p.class_names = get<std::vector<std::string>>(o["class_names"], "class_names");
  }
  if (o.contains("alpha")) p.alpha = get<std::vector<double>>(o["alpha"], "alpha");
  if (o.contains("nms_iou")) p.nms_iou = get<std::vector<double>>(o["nms_iou"], "nms_iou");
  if (o.contains("class_agnostic")) {
    p.class_agnostic = get<bool>(o["class_agnostic"], "class_agnostic");
  }
  if (o.contains("score_thresh")) p.score_thresh = get<double>(o["score_thresh"], "score_thresh");
  if (o.contains("max_detections")) {
    p.max_detections = get<int>(o["max_detections"], "max_detections");
  }
  if (o.contains("loss_weights")) {
    const auto w = get<std::vector<double>>(o["loss_weights"], "loss_weights");
    PD_CHECK(w.size() == 3, ErrorCode::kParse, "loss_weights needs [cls, iou, reg]");
    p.loss_weights = losses::LossWeights{w[0], w[1], w[2]};
  }
  if (o.contains("backbone")) {
    const json& b = o["backbone"];
    check_keys(b, {"stage_blocks", "stage_channels", "in_channels"}, "backbone");
    if (b.contains("stage_blocks")) {
      p.backbone.stage_blocks = get<std::array<int, 4>>(b["stage_blocks"], "stage_blocks");
    }
    if (b.contains("stage_channels")) {
      p.backbone.stage_channels = get<std::array<int, 4>>(b["stage_channels"], "stage_channels");
    }
    if (b.contains("in_channels")) p.backbone.in_channels = get<int>(b["in_channels"], "in_channels");
  }
  if (o.contains("mape_layers")) p.mape_layers = get<int>(o["mape_layers"], "mape_layers");
  if (o.contains("neck_channels")) p.neck_channels = get<int>(o["neck_channels"], "neck_channels");
  if (o.contains("head_stride")) p.head_stride = get<int>(o["head_stride"], "head_stride");
  p.validate();
  return p;
}

Profile load_profile(const std::string& name, const std::filesystem::path& config) {
  Profile p = builtin_profile(name);
  if (config.empty()) return p;
  std::ifstream in(config);
  PD_CHECK(in.good(), ErrorCode::kIo, "cannot open config ", config.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, "config ", config.string(), ": ", e.what());
  }
  return apply_overrides(std::move(p), j);
}

json profile_to_json(const Profile& p) {
  const auto& r = p.grid.range;
  return json{
      {"name", p.name},
      {"range", {r.x_min, r.x_max, r.y_min, r.y_max, r.z_min, r.z_max}},
      {"pillar_size", {p.grid.pillar_x, p.grid.pillar_y}},
      {"class_names", p.class_names},
      {"alpha", p.alpha},
      {"nms_iou", p.nms_iou},
      {"class_agnostic", p.class_agnostic},
      {"score_thresh", p.score_thresh},
      {"max_detections", p.max_detections},
      {"loss_weights", {p.loss_weights.cls, p.loss_weights.iou, p.loss_weights.reg}},
      {"backbone",
       {{"stage_blocks", p.backbone.stage_blocks},
        {"stage_channels", p.backbone.stage_channels},
        {"in_channels", p.backbone.in_channels}}},
      {"mape_layers", p.mape_layers},
      {"neck_channels", p.neck_channels},
      {"head_stride", p.head_stride},
  };
}

}  // namespace pillardet::model

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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dethead/dethead.hpp"
#include "losses/losses.hpp"
#include "pillargrid/pillargrid.hpp"
#include "repnet/backbone.hpp"

namespace pillardet::model {

/// Named configuration bundle for a dataset setting.
struct Profile {
  std::string name;
  pillargrid::GridConfig grid;
  std::vector<std::string> class_names;
  std::vector<double> alpha;     // rectification exponent per class (or one shared)
  std::vector<double> nms_iou;   // NMS IoU threshold per class (or one shared)
  bool class_agnostic = false;
  double score_thresh = 0.1;
  int max_detections = 500;
  losses::LossWeights loss_weights;
  repnet::BackboneConfig backbone;
  int mape_layers = 1;
  int neck_channels = 128;
  int head_stride = 4;  // head cell size in pillars

  int classes() const { return static_cast<int>(class_names.size()); }
  dethead::HeadGeometry head_geometry() const;
  dethead::DecodeOptions decode_options() const;
  dethead::NmsOptions nms_options() const;
  void validate() const;
};

Profile waymo_profile();
Profile nuscenes_profile();

/// Built-in profile by name ("waymo" or "nuscenes").
Profile builtin_profile(const std::string& name);

/// Overrides fields from a JSON object; unknown keys are errors.
Profile apply_overrides(Profile base, const nlohmann::json& overrides);

/// Built-in profile, optionally overridden by a JSON config file.
Profile load_profile(const std::string& name, const std::filesystem::path& config = {});

nlohmann::json profile_to_json(const Profile& p);

}  // namespace pillardet::model

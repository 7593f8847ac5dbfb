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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dethead/dethead.hpp"
#include "losses/losses.hpp"
#include "mape/mape.hpp"
#include "model/profile.hpp"
#include "pointcloud/pointcloud.hpp"
#include "repnet/backbone.hpp"

namespace pillardet::model {

/// Architecture hyper-parameters stored with a checkpoint.
struct ModelConfig {
  repnet::BackboneConfig backbone;
  int mape_layers = 1;
  int neck_channels = 128;
  int classes = 3;

  int mape_width() const { return backbone.in_channels; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

ModelConfig config_from_profile(const Profile& p);

struct ModelParams {
  ModelConfig config;
  mape::MapeParams mape;
  repnet::BackboneParams backbone;
  repnet::NeckParams neck;
  dethead::HeadParams head;

  bool fused() const { return backbone.fused(); }
  void validate() const;
};

ModelParams init_model(const ModelConfig& cfg, repnet::InitKind kind, std::uint64_t seed);

/// Fuses the backbone; MAPE, neck and head are already single-path.
ModelParams fuse_model(const ModelParams& train);

struct FuseReport {
  int probes = 0;
  double max_discrepancy = 0.0;  // over probes and backbone stages
};

/// Compares train and fused backbones on random canvases of size h x w.
FuseReport probe_fusion(const ModelParams& train, const ModelParams& fused, int probes,
                        std::uint64_t seed, int h = 24, int w = 24);

// Checkpoints are a JSON manifest plus a raw little-endian tensor blob next to it.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& manifest);
ModelParams load_checkpoint(const std::filesystem::path& manifest);

struct EncodedPillars {
  std::vector<pillargrid::Pillar> pillars;
  std::vector<std::vector<double>> features;
};

/// Pillarizes the cloud (points must lie inside the grid range) and runs MAPE.
EncodedPillars encode_cloud(const pointcloud::PointCloud& cloud, const mape::MapeParams& mape,
                            const pillargrid::GridConfig& grid);

struct StageTimes {
  double encode_ms = 0.0;
  double backbone_ms = 0.0;  // backbone and neck
  double head_ms = 0.0;
  double post_ms = 0.0;  // decode, rectification, NMS
};

struct DetectOptions {
  /// When set, the network is skipped and this head output is post-processed.
  const dethead::HeadOutput* head_override = nullptr;
};

struct DetectResult {
  std::vector<dethead::Detection> detections;
  std::size_t points_in_range = 0;
  std::size_t pillars = 0;
  StageTimes times;
};

/// Crop to range, pillarize, MAPE, scatter, backbone, neck, head, decode with
/// rectification, NMS. Errors carry the failing stage's name.
DetectResult detect(const pointcloud::PointCloud& cloud, const ModelParams& params,
                    const Profile& profile, const DetectOptions& opt = {});

/// Dense head output for a cloud (no post-processing).
dethead::HeadOutput run_network(const pointcloud::PointCloud& cloud, const ModelParams& params,
                                const Profile& profile);

struct TrainStepReport {
  losses::LossParts parts;
  double total = 0.0;
  std::size_t objects = 0;
  double lr = 0.0;
  losses::LossParts parts_after;
  double total_after = 0.0;
};

/// Losses of a head output against the scene boxes, then one gradient step on
/// the head output itself (a smoke test of the gradients, not an optimizer).
TrainStepReport train_step(const dethead::HeadOutput& head, std::span<const Box3D> boxes,
                           const Profile& profile, double lr);

struct BenchRow {
  std::string stage;
  double p50 = 0.0, p90 = 0.0, mean = 0.0;
};

/// Runs detect `repeats` times on a synthetic cloud of `points` points and
/// reports wall-clock milliseconds per stage.
std::vector<BenchRow> bench(const ModelParams& params, const Profile& profile, int points,
                            int repeats, std::uint64_t seed);

nlohmann::json detection_to_json(const dethead::Detection& d);
dethead::Detection detection_from_json(const nlohmann::json& j);
nlohmann::json box_to_json(const Box3D& b);
Box3D box_from_json(const nlohmann::json& j);

}  // namespace pillardet::model

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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "common/types.hpp"

namespace pillardet::pointcloud {

/// One LiDAR return. Stored as float32 to match the on-disk record layout.
struct Point {
  float x = 0.f, y = 0.f, z = 0.f;
  float r = 0.f;  // reflectance
  float t = 0.f;  // relative timestamp, 0 for single-frame data

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(r) &&
           std::isfinite(t);
  }
  bool operator==(const Point&) const = default;
};

struct PointCloud {
  std::vector<Point> points;
  std::optional<Range3D> declared_range;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

inline constexpr std::size_t kRecordFields = 5;
inline constexpr std::size_t kRecordBytes = kRecordFields * sizeof(float);

/// Companion metadata path: "<cloud path>.meta.json".
std::filesystem::path metadata_path(const std::filesystem::path& cloud_path);

/// Reads little-endian float32 records (x, y, z, r, t). If the companion
/// metadata file exists, its record count is checked and its declared range
/// is attached to the cloud.
PointCloud load_cloud(const std::filesystem::path& path);

/// Writes the record file and its metadata companion.
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path);

/// Keeps exactly the points inside the half-open range, in order.
PointCloud crop_to_range(const PointCloud& cloud, const Range3D& range);

/// Global scene augmentation. Flips are Bernoulli draws with the given
/// probabilities; rotation, translation and scale are uniform draws from
/// their closed intervals. Applied in the fixed order
/// flip-X, flip-Y, rotate, translate, scale.
struct AugmentSpec {
  double flip_x_prob = 0.0;  // mirror across the X axis (y -> -y)
  double flip_y_prob = 0.0;  // mirror across the Y axis (x -> -x)
  double rot_min = 0.0, rot_max = 0.0;
  std::array<double, 3> trans_min{0.0, 0.0, 0.0};
  std::array<double, 3> trans_max{0.0, 0.0, 0.0};
  double scale_min = 1.0, scale_max = 1.0;

  void validate() const;
};

/// The concrete transform drawn from an AugmentSpec.
struct AugmentDraw {
  bool flip_x = false;
  bool flip_y = false;
  double rotation = 0.0;
  std::array<double, 3> translation{0.0, 0.0, 0.0};
  double scale = 1.0;
};

struct Scene {
  PointCloud cloud;
  std::vector<Box3D> boxes;
};

AugmentDraw draw_augmentation(const AugmentSpec& spec, std::uint64_t seed);

Box3D transform_box(const Box3D& box, const AugmentDraw& draw);

Scene augment_global(const PointCloud& cloud, std::span<const Box3D> boxes,
                     const AugmentSpec& spec, std::uint64_t seed);

/// Signed distance (meters) from a point to the box surface; negative inside.
double box_signed_distance(double x, double y, double z, const Box3D& box);

inline bool point_in_box(const Point& p, const Box3D& box) {
  return box_signed_distance(p.x, p.y, p.z, box) < 0.0;
}

struct SceneSpec {
  Range3D range{-20.0, 20.0, -20.0, 20.0, -2.0, 4.0};
  int num_objects = 0;
  int num_classes = 3;
  double length_min = 3.5, length_max = 5.0;
  double width_min = 1.6, width_max = 2.2;
  double height_min = 1.4, height_max = 1.8;
  int points_per_object = 100;
  int background_points = 1000;
  double noise = 0.02;      // std-dev of ground jitter, meters
  double ground_z = -1.0;   // box bottoms rest here
  /// When non-empty these boxes are used verbatim instead of random placement.
  std::vector<Box3D> planted;

  void validate() const;
};

/// Deterministic synthetic scene: non-overlapping boxes filled with interior
/// points plus ground returns outside every box.
Scene generate_scene(const SceneSpec& spec, std::uint64_t seed);

}  // namespace pillardet::pointcloud

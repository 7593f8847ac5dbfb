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
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pointcloud/pointcloud.hpp"
#include "repnet/tensor.hpp"

namespace pillardet::pillargrid {

/// BEV grid over a range. Pillars span the full z extent.
struct GridConfig {
  Range3D range;
  double pillar_x = 0.2;
  double pillar_y = 0.2;

  int nx() const;
  int ny() const;
  void validate() const;
  bool operator==(const GridConfig&) const = default;
};

/// A non-empty grid cell and the indices of its points in the source cloud.
struct Pillar {
  int ix = 0;
  int iy = 0;
  std::vector<std::size_t> point_indices;

  bool operator==(const Pillar&) const = default;
};

/// [x, y, z, r, t, x_c, y_c, z_c, x_r, y_r, z_r]: raw point, offset from the
/// pillar's geometric center (z center is the mid-height of the range), and
/// offset from the range minimum corner.
inline constexpr int kAugmentedDim = 11;
using AugmentedPoint = std::array<double, kAugmentedDim>;

/// Groups every point into its pillar, ix = floor((x - x_min) / pillar_x) and
/// likewise for y. Pillars come back sorted by (iy, ix); point order inside a
/// pillar follows the cloud. With threads > 1 the cloud is partitioned and the
/// partial groupings are merged in partition order, so the result is identical.
std::vector<Pillar> assign_pillars(const pointcloud::PointCloud& cloud, const GridConfig& cfg,
                                   unsigned threads = 1);

std::vector<AugmentedPoint> augment_points(const pointcloud::PointCloud& cloud,
                                           const Pillar& pillar, const GridConfig& cfg);

struct BEVCanvas {
  repnet::DenseTensor features;       // (1, D, ny, nx)
  std::vector<std::uint8_t> occupied;  // ny * nx, row-major
};

/// Writes feature[p] into canvas[:, iy, ix] for every pillar; other cells stay 0.
/// Every feature vector must have `channels` entries.
BEVCanvas scatter(std::span<const Pillar> pillars, std::span<const std::vector<double>> features,
                  const GridConfig& cfg, int channels);

/// Reads the feature column of each pillar back out of a canvas.
std::vector<std::vector<double>> gather(const BEVCanvas& canvas, std::span<const Pillar> pillars);

}  // namespace pillardet::pillargrid

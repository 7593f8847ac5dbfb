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
#include <span>
#include <vector>

#include "dethead/dethead.hpp"

namespace pillardet::losses {

struct LossWeights {
  double cls = 1.0;   // classification (heatmap)
  double iou = 1.0;   // IoU branch
  double reg = 0.25;  // DIoU + L1 regression, shared

  void validate() const;
};

/// Regression target layout at a center cell:
/// offset x, offset y, z, log l, log w, log h, sin yaw, cos yaw.
constexpr int kRegChannels = 8;

struct Heatmap {
  int classes = 0, h = 0, w = 0;
  std::vector<double> values;

  static Heatmap zeros(int classes, int h, int w);
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * h + y) * w + x;
  }
};

struct ObjectTarget {
  Box3D box;
  int cell_x = 0, cell_y = 0;
  std::array<double, kRegChannels> reg{};
};

struct Targets {
  Heatmap heatmap;
  std::vector<ObjectTarget> objects;
};

struct GaussianRule {
  double min_overlap = 0.7;
  int min_radius = 2;
};

/// Center-cell radius such that a box displaced by it still overlaps the
/// original by at least `min_overlap` (box extent in cells).
double gaussian_radius(double extent_y, double extent_x, double min_overlap);

/// One Gaussian per object, peak exactly 1 at the center cell, sigma =
/// (2r + 1) / 6 with r = max(min_radius, floor(radius)); overlaps take the max.
Targets render_gaussian_targets(std::span<const Box3D> boxes, const dethead::HeadGeometry& geo,
                                int classes, const GaussianRule& rule = {});

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;  // d value / d pred, same layout as pred
};

struct FocalConfig {
  double alpha = 2.0;
  double beta = 4.0;
};

/// Penalty-reduced focal loss summed over cells and divided by max(1, #cells
/// whose target is exactly 1).
LossResult focal_loss(const Heatmap& pred, const Heatmap& target, const FocalConfig& cfg = {});

/// Sum of absolute errors over channels, averaged over matches. pred and
/// target are (matches, channels) row-major.
LossResult reg_l1_loss(std::span<const double> pred, std::span<const double> target,
                       int channels);

/// Mean over entries of |pred - 2 (I - 0.5)|.
LossResult iou_branch_loss(std::span<const double> iou_pred, std::span<const double> gt_iou);

/// Gradient slot order: cx, cy, cz, l, w, h, yaw.
struct DiouResult {
  double value = 0.0;
  std::array<double, 7> grad{};
};

/// 1 - IoU_bev + d^2 / c^2, with c the diagonal of the smallest axis-aligned
/// rectangle containing both footprints. The gradient is exact (piecewise).
DiouResult diou_loss(const Box3D& pred, const Box3D& gt);

struct LossParts {
  double cls = 0.0, iou = 0.0, diou = 0.0, reg = 0.0;
};

double total_loss(const LossParts& parts, const LossWeights& w = {});

}  // namespace pillardet::losses

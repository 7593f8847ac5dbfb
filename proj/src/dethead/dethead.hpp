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

#include <random>
#include <span>
#include <vector>

#include "dethead/geometry.hpp"
#include "pillargrid/pillargrid.hpp"
#include "repnet/ops.hpp"

namespace pillardet::dethead {

/// Dense per-cell predictions of a center-based head, channel-major.
///   heatmap  (classes, h, w)  per-class center likelihood in [0, 1]
///   offset   (2, h, w)        sub-cell center offset from the cell center, in cells
///   z        (1, h, w)        box center height, meters
///   size     (3, h, w)        log of (l, w, h)
///   yaw      (2, h, w)        (sin, cos) of the heading
///   iou      (1, h, w)        predicted IoU mapped to [-1, 1]
struct HeadOutput {
  int classes = 0, h = 0, w = 0;
  std::vector<double> heatmap, offset, z, size, yaw, iou;

  static HeadOutput zeros(int classes, int h, int w);

  std::size_t cell(int y, int x) const { return static_cast<std::size_t>(y) * w + x; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  double& heat(int c, int y, int x) { return heatmap[c * plane() + cell(y, x)]; }
  double heat(int c, int y, int x) const { return heatmap[c * plane() + cell(y, x)]; }
  /// Channel ch of a multi-channel regression map.
  static double& at(std::vector<double>& map, std::size_t plane, int ch, std::size_t cell) {
    return map[ch * plane + cell];
  }

  void validate() const;
};

/// Maps head cells back to meters: cell (x, y) covers
/// [x_min + x * cell_x, x_min + (x + 1) * cell_x) and likewise in y.
struct HeadGeometry {
  double x_min = 0.0, y_min = 0.0;
  double cell_x = 0.8, cell_y = 0.8;
  int h = 0, w = 0;

  /// Head map at `stride` pillars per cell over the grid range.
  static HeadGeometry from_grid(const pillargrid::GridConfig& grid, int stride);
};

struct Detection {
  Box3D box;
  double cls_score = 0.0;
  double iou_score = 0.0;
  double final_score = 0.0;
};

/// cls^(1 - alpha) * iou^alpha.
double rectify_score(double cls, double iou, double alpha);

struct DecodeOptions {
  int max_detections = 500;
  double score_thresh = 0.1;
  /// Rectification exponent per class; a single entry applies to all classes.
  std::vector<double> alpha{0.5};
};

/// Top-k local maxima (3x3 neighborhood, per class) of the heatmap strictly
/// above the threshold, ordered by (score desc, class, row, col).
std::vector<Detection> decode(const HeadOutput& out, const HeadGeometry& geo,
                              const DecodeOptions& opt);

struct NmsOptions {
  /// IoU threshold per class; a single entry applies to all classes.
  std::vector<double> iou_thresh{0.5};
  bool class_agnostic = false;
};

/// Greedy rotated-IoU suppression by descending final score (ties by input
/// index). Class-specific unless class_agnostic. Output is in visit order.
std::vector<Detection> nms(std::span<const Detection> dets, const NmsOptions& opt);

/// Writes boxes into a head output the way a perfect head would predict them:
/// a peak of height `peak` at each center cell with a Gaussian skirt, exact
/// regression targets at center cells, and an IoU channel of +1.
HeadOutput render_head_output(std::span<const Box3D> boxes, const HeadGeometry& geo, int classes,
                              double peak = 0.9);

/// Shared 3x3 conv + ReLU followed by one 1x1 conv per output map.
struct HeadParams {
  repnet::ConvParams shared;
  repnet::ConvParams heatmap, offset, z, size, yaw, iou;

  int classes() const { return heatmap.c_out; }
  void validate() const;
};

HeadParams init_head(int in_channels, int classes, bool random, std::mt19937_64& rng);

HeadOutput head_forward(const repnet::DenseTensor& features, const HeadParams& p);

}  // namespace pillardet::dethead

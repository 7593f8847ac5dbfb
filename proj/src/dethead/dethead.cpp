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

#include "dethead/dethead.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pillardet::dethead {

double rotated_iou_bev(const Box3D& a, const Box3D& b) {
  PD_CHECK(a.valid() && b.valid(), ErrorCode::kInvalidArgument,
           "IoU needs boxes with positive, finite extent");
  const double iou = rotated_iou(bev_rect<double>(a), bev_rect<double>(b));
  return std::clamp(iou, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  PD_CHECK(a.valid() && b.valid(), ErrorCode::kInvalidArgument,
           "IoU needs boxes with positive, finite extent");
  const double inter_bev = std::max(0.0, intersection_area(bev_rect<double>(a), bev_rect<double>(b)));
  const double z_lo = std::max(a.cz - a.h / 2.0, b.cz - b.h / 2.0);
  const double z_hi = std::min(a.cz + a.h / 2.0, b.cz + b.h / 2.0);
  const double inter = inter_bev * std::max(0.0, z_hi - z_lo);
  const double uni = a.l * a.w * a.h + b.l * b.w * b.h - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

HeadOutput HeadOutput::zeros(int classes, int h, int w) {
  PD_CHECK(classes > 0 && h > 0 && w > 0, ErrorCode::kShapeMismatch,
           "head output needs positive classes and extent");
  HeadOutput o;
  o.classes = classes;
  o.h = h;
  o.w = w;
  const std::size_t p = static_cast<std::size_t>(h) * w;
  o.heatmap.assign(classes * p, 0.0);
  o.offset.assign(2 * p, 0.0);
  o.z.assign(p, 0.0);
  o.size.assign(3 * p, 0.0);
  o.yaw.assign(2 * p, 0.0);
  o.iou.assign(p, 0.0);
  return o;
}

void HeadOutput::validate() const {
  const std::size_t p = plane();
  PD_CHECK(classes > 0 && heatmap.size() == classes * p && offset.size() == 2 * p &&
               z.size() == p && size.size() == 3 * p && yaw.size() == 2 * p && iou.size() == p,
           ErrorCode::kShapeMismatch, "head output maps do not share a (", h, ", ", w, ") grid");
  for (double v : heatmap) {
    PD_CHECK(v >= 0.0 && v <= 1.0, ErrorCode::kInvalidArgument,
             "heatmap values must lie in [0, 1]");
  }
}

HeadGeometry HeadGeometry::from_grid(const pillargrid::GridConfig& grid, int stride) {
  grid.validate();
  PD_CHECK(stride >= 1, ErrorCode::kInvalidArgument, "head stride must be >= 1");
  HeadGeometry g;
  g.x_min = grid.range.x_min;
  g.y_min = grid.range.y_min;
  g.cell_x = grid.pillar_x * stride;
  g.cell_y = grid.pillar_y * stride;
  g.w = (grid.nx() + stride - 1) / stride;
  g.h = (grid.ny() + stride - 1) / stride;
  return g;
}

double rectify_score(double cls, double iou, double alpha) {
  PD_CHECK(cls > 0.0 && cls <= 1.0, ErrorCode::kInvalidArgument, "class score ", cls,
           " outside (0, 1]");
  PD_CHECK(iou >= 0.0 && iou <= 1.0, ErrorCode::kInvalidArgument, "IoU score ", iou,
           " outside [0, 1]");
  PD_CHECK(alpha >= 0.0 && alpha <= 1.0, ErrorCode::kInvalidArgument, "rectification factor ",
           alpha, " outside [0, 1]");
  if (alpha == 0.0) return cls;
  if (alpha == 1.0) return iou;
  return std::pow(cls, 1.0 - alpha) * std::pow(iou, alpha);
}

namespace {

double per_class(const std::vector<double>& v, int cls, const char* what) {
  PD_CHECK(!v.empty(), ErrorCode::kInvalidArgument, what, " list is empty");
  if (v.size() == 1) return v[0];
  PD_CHECK(cls >= 0 && static_cast<std::size_t>(cls) < v.size(), ErrorCode::kInvalidArgument,
           what, " has no entry for class ", cls);
  return v[cls];
}

struct Peak {
  double score;
  int cls, y, x;
};

}  // namespace

std::vector<Detection> decode(const HeadOutput& out, const HeadGeometry& geo,
                              const DecodeOptions& opt) {
  out.validate();
  PD_CHECK(geo.h == out.h && geo.w == out.w, ErrorCode::kShapeMismatch, "head geometry is ",
           geo.h, "x", geo.w, " but the output is ", out.h, "x", out.w);
  PD_CHECK(opt.max_detections >= 0, ErrorCode::kInvalidArgument,
           "max_detections must be non-negative");

  std::vector<Peak> peaks;
  for (int c = 0; c < out.classes; ++c) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        const double v = out.heat(c, y, x);
        if (!(v > opt.score_thresh) || v <= 0.0) continue;
        bool is_max = true;
        for (int dy = -1; dy <= 1 && is_max; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = y + dy, nx = x + dx;
            if ((dy == 0 && dx == 0) || ny < 0 || nx < 0 || ny >= out.h || nx >= out.w) continue;
            if (out.heat(c, ny, nx) > v) {
              is_max = false;
              break;
            }
          }
        }
        if (is_max) peaks.push_back({v, c, y, x});
      }
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cls != b.cls) return a.cls < b.cls;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  if (peaks.size() > static_cast<std::size_t>(opt.max_detections)) {
    peaks.resize(opt.max_detections);
  }

  const std::size_t plane = out.plane();
  std::vector<Detection> dets;
  dets.reserve(peaks.size());
  for (const Peak& pk : peaks) {
    const std::size_t cell = out.cell(pk.y, pk.x);
    Detection d;
    d.box.cx = geo.x_min + (pk.x + 0.5 + out.offset[cell]) * geo.cell_x;
    d.box.cy = geo.y_min + (pk.y + 0.5 + out.offset[plane + cell]) * geo.cell_y;
    d.box.cz = out.z[cell];
    d.box.l = std::exp(out.size[cell]);
    d.box.w = std::exp(out.size[plane + cell]);
    d.box.h = std::exp(out.size[2 * plane + cell]);
    d.box.yaw = normalize_yaw(std::atan2(out.yaw[cell], out.yaw[plane + cell]));
    d.box.class_id = pk.cls;
    d.cls_score = pk.score;
    d.iou_score = std::clamp((out.iou[cell] + 1.0) / 2.0, 0.0, 1.0);
    d.final_score =
        rectify_score(std::min(d.cls_score, 1.0), d.iou_score, per_class(opt.alpha, pk.cls, "alpha"));
    dets.push_back(d);
  }
  return dets;
}

std::vector<Detection> nms(std::span<const Detection> dets, const NmsOptions& opt) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].final_score > dets[b].final_score;
  });
  std::vector<char> suppressed(dets.size(), 0);
  std::vector<Detection> kept;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(dets[i]);
    const int cls = dets[i].box.class_id;
    const double thresh = per_class(opt.iou_thresh, cls, "NMS threshold");
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (suppressed[j]) continue;
      if (!opt.class_agnostic && dets[j].box.class_id != cls) continue;
      if (rotated_iou_bev(dets[i].box, dets[j].box) > thresh) suppressed[j] = 1;
    }
  }
  return kept;
}

HeadOutput render_head_output(std::span<const Box3D> boxes, const HeadGeometry& geo, int classes,
                              double peak) {
  PD_CHECK(peak > 0.0 && peak <= 1.0, ErrorCode::kInvalidArgument, "peak must lie in (0, 1]");
  HeadOutput out = HeadOutput::zeros(classes, geo.h, geo.w);
  const std::size_t plane = out.plane();
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const Box3D& b = boxes[k];
    b.validate();
    PD_CHECK(b.class_id >= 0 && b.class_id < classes, ErrorCode::kInvalidArgument, "box ", k,
             " has class ", b.class_id, " outside [0, ", classes, ")");
    const double fx = (b.cx - geo.x_min) / geo.cell_x;
    const double fy = (b.cy - geo.y_min) / geo.cell_y;
    const int x = static_cast<int>(std::floor(fx));
    const int y = static_cast<int>(std::floor(fy));
    PD_CHECK(x >= 0 && x < geo.w && y >= 0 && y < geo.h, ErrorCode::kOutOfRange, "box ", k,
             " center lies outside the head grid");
    constexpr int kRadius = 2;
    for (int dy = -kRadius; dy <= kRadius; ++dy) {
      for (int dx = -kRadius; dx <= kRadius; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || xx < 0 || yy >= geo.h || xx >= geo.w) continue;
        const double v = peak * std::exp(-(dx * dx + dy * dy) / 2.0);
        double& cell = out.heat(b.class_id, yy, xx);
        cell = std::max(cell, v);
      }
    }
    const std::size_t c = out.cell(y, x);
    out.offset[c] = fx - x - 0.5;
    out.offset[plane + c] = fy - y - 0.5;
    out.z[c] = b.cz;
    out.size[c] = std::log(b.l);
    out.size[plane + c] = std::log(b.w);
    out.size[2 * plane + c] = std::log(b.h);
    out.yaw[c] = std::sin(b.yaw);
    out.yaw[plane + c] = std::cos(b.yaw);
    out.iou[c] = 1.0;
  }
  return out;
}

void HeadParams::validate() const {
  shared.validate();
  const int c = shared.c_out;
  for (const repnet::ConvParams* p : {&heatmap, &offset, &z, &size, &yaw, &iou}) {
    p->validate();
    PD_CHECK(p->k == 1 && p->stride == 1 && p->c_in == c, ErrorCode::kShapeMismatch,
             "head branches must be 1x1 convs over the shared ", c, " channels");
  }
  PD_CHECK(offset.c_out == 2 && z.c_out == 1 && size.c_out == 3 && yaw.c_out == 2 &&
               iou.c_out == 1,
           ErrorCode::kShapeMismatch, "head branch widths must be 2/1/3/2/1");
}

HeadParams init_head(int in_channels, int classes, bool random, std::mt19937_64& rng) {
  using repnet::ConvParams;
  HeadParams p;
  p.shared = ConvParams::zeros(in_channels, in_channels, 3, 1);
  p.heatmap = ConvParams::zeros(classes, in_channels, 1, 1);
  p.offset = ConvParams::zeros(2, in_channels, 1, 1);
  p.z = ConvParams::zeros(1, in_channels, 1, 1);
  p.size = ConvParams::zeros(3, in_channels, 1, 1);
  p.yaw = ConvParams::zeros(2, in_channels, 1, 1);
  p.iou = ConvParams::zeros(1, in_channels, 1, 1);
  // Focal-loss prior: initial heatmap around 0.1.
  for (float& b : p.heatmap.bias) b = -2.19f;
  if (random) {
    for (ConvParams* c : {&p.shared, &p.heatmap, &p.offset, &p.z, &p.size, &p.yaw, &p.iou}) {
      std::normal_distribution<double> nd(0.0, std::sqrt(1.0 / (c->k * c->k * c->c_in)));
      for (float& v : c->kernel) v = static_cast<float>(nd(rng));
    }
  }
  return p;
}

HeadOutput head_forward(const repnet::DenseTensor& features, const HeadParams& p) {
  p.validate();
  PD_CHECK(features.n() == 1, ErrorCode::kShapeMismatch, "head runs on a single sample, got ",
           features.shape().str());
  repnet::DenseTensor shared = repnet::conv2d(features, p.shared);
  repnet::relu_inplace(shared);
  HeadOutput out = HeadOutput::zeros(p.classes(), features.h(), features.w());
  auto copy = [](const repnet::DenseTensor& t, std::vector<double>& dst) {
    const auto v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) dst[i] = v[i];
  };
  const repnet::DenseTensor logits = repnet::conv2d(shared, p.heatmap);
  const auto heat = logits.values();
  for (std::size_t i = 0; i < heat.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(heat[i])));
    out.heatmap[i] = std::clamp(s, 1e-4, 1.0 - 1e-4);
  }
  copy(repnet::conv2d(shared, p.offset), out.offset);
  copy(repnet::conv2d(shared, p.z), out.z);
  copy(repnet::conv2d(shared, p.size), out.size);
  copy(repnet::conv2d(shared, p.yaw), out.yaw);
  copy(repnet::conv2d(shared, p.iou), out.iou);
  for (double& v : out.iou) v = std::clamp(v, -1.0, 1.0);
  return out;
}

}  // namespace pillardet::dethead

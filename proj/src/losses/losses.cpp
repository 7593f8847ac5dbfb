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

#include "losses/losses.hpp"

#include <algorithm>
#include <cmath>

#include "dethead/geometry.hpp"
#include "losses/dual.hpp"

namespace pillardet::losses {

void LossWeights::validate() const {
  PD_CHECK(std::isfinite(cls) && std::isfinite(iou) && std::isfinite(reg) && cls >= 0.0 &&
               iou >= 0.0 && reg >= 0.0,
           ErrorCode::kInvalidArgument, "loss weights must be finite and non-negative");
}

Heatmap Heatmap::zeros(int classes, int h, int w) {
  PD_CHECK(classes > 0 && h > 0 && w > 0, ErrorCode::kShapeMismatch,
           "heatmap needs positive classes and extent");
  Heatmap m;
  m.classes = classes;
  m.h = h;
  m.w = w;
  m.values.assign(static_cast<std::size_t>(classes) * h * w, 0.0);
  return m;
}

double gaussian_radius(double extent_y, double extent_x, double min_overlap) {
  const double hh = extent_y, ww = extent_x, o = min_overlap;
  const double b1 = hh + ww;
  const double c1 = ww * hh * (1.0 - o) / (1.0 + o);
  const double r1 = (b1 + std::sqrt(b1 * b1 - 4.0 * c1)) / 2.0;
  const double b2 = 2.0 * (hh + ww);
  const double c2 = (1.0 - o) * ww * hh;
  const double r2 = (b2 + std::sqrt(b2 * b2 - 16.0 * c2)) / 2.0;
  const double a3 = 4.0 * o;
  const double b3 = -2.0 * o * (hh + ww);
  const double c3 = (o - 1.0) * ww * hh;
  const double r3 = (b3 + std::sqrt(b3 * b3 - 4.0 * a3 * c3)) / 2.0;
  return std::min({r1, r2, r3});
}

Targets render_gaussian_targets(std::span<const Box3D> boxes, const dethead::HeadGeometry& geo,
                                int classes, const GaussianRule& rule) {
  PD_CHECK(rule.min_overlap > 0.0 && rule.min_overlap < 1.0 && rule.min_radius >= 0,
           ErrorCode::kInvalidArgument, "Gaussian rule needs overlap in (0, 1), radius >= 0");
  Targets t;
  t.heatmap = Heatmap::zeros(classes, geo.h, geo.w);
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const Box3D& b = boxes[k];
    b.validate();
    PD_CHECK(b.class_id >= 0 && b.class_id < classes, ErrorCode::kInvalidArgument, "box ", k,
             " has class ", b.class_id, " outside [0, ", classes, ")");
    const double fx = (b.cx - geo.x_min) / geo.cell_x;
    const double fy = (b.cy - geo.y_min) / geo.cell_y;
    PD_CHECK(fx >= 0.0 && fy >= 0.0 && fx < geo.w && fy < geo.h, ErrorCode::kOutOfRange, "box ",
             k, " center (", b.cx, ", ", b.cy, ") lies outside the grid");
    const int x = std::min(static_cast<int>(std::floor(fx)), geo.w - 1);
    const int y = std::min(static_cast<int>(std::floor(fy)), geo.h - 1);

    const double r = gaussian_radius(b.w / geo.cell_y, b.l / geo.cell_x, rule.min_overlap);
    const int radius = std::max(rule.min_radius, static_cast<int>(r));
    const double sigma = (2.0 * radius + 1.0) / 6.0;
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || xx < 0 || yy >= geo.h || xx >= geo.w) continue;
        const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        double& cell = t.heatmap.values[t.heatmap.index(b.class_id, yy, xx)];
        cell = std::max(cell, v);
      }
    }

    ObjectTarget o;
    o.box = b;
    o.cell_x = x;
    o.cell_y = y;
    o.reg = {fx - x - 0.5, fy - y - 0.5, b.cz, std::log(b.l), std::log(b.w), std::log(b.h),
             std::sin(b.yaw), std::cos(b.yaw)};
    t.objects.push_back(o);
  }
  return t;
}

LossResult focal_loss(const Heatmap& pred, const Heatmap& target, const FocalConfig& cfg) {
  PD_CHECK(pred.classes == target.classes && pred.h == target.h && pred.w == target.w &&
               pred.values.size() == target.values.size(),
           ErrorCode::kShapeMismatch, "focal loss: prediction and target shapes differ");
  PD_CHECK(cfg.alpha >= 1.0 && cfg.beta >= 0.0, ErrorCode::kInvalidArgument,
           "focal exponents need alpha >= 1 and beta >= 0");
  const std::size_t n = pred.values.size();
  LossResult r;
  r.grad.assign(n, 0.0);
  std::size_t positives = 0;
  for (double y : target.values) positives += (y == 1.0);
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, positives));
  const double a = cfg.alpha, b = cfg.beta;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = pred.values[i], y = target.values[i];
    PD_CHECK(p > 0.0 && p < 1.0, ErrorCode::kInvalidArgument, "focal loss: prediction ", p,
             " at index ", i, " outside (0, 1)");
    PD_CHECK(y >= 0.0 && y <= 1.0, ErrorCode::kInvalidArgument, "focal loss: target ", y,
             " at index ", i, " outside [0, 1]");
    if (y == 1.0) {
      const double q = 1.0 - p;
      r.value += -std::pow(q, a) * std::log(p);
      r.grad[i] = (a * std::pow(q, a - 1.0) * std::log(p) - std::pow(q, a) / p) * norm;
    } else {
      const double wgt = std::pow(1.0 - y, b);
      const double lq = std::log(1.0 - p);
      r.value += -wgt * std::pow(p, a) * lq;
      r.grad[i] = -wgt * (a * std::pow(p, a - 1.0) * lq - std::pow(p, a) / (1.0 - p)) * norm;
    }
  }
  r.value *= norm;
  return r;
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

LossResult reg_l1_loss(std::span<const double> pred, std::span<const double> target,
                       int channels) {
  PD_CHECK(channels > 0, ErrorCode::kInvalidArgument, "reg L1: channels must be positive");
  PD_CHECK(pred.size() == target.size() && pred.size() % channels == 0,
           ErrorCode::kShapeMismatch, "reg L1: prediction has ", pred.size(),
           " values, target ", target.size(), ", channels ", channels);
  const std::size_t matches = pred.size() / channels;
  PD_CHECK(matches > 0, ErrorCode::kInvalidArgument, "reg L1 needs at least one matched cell");
  LossResult r;
  r.grad.resize(pred.size());
  const double inv = 1.0 / static_cast<double>(matches);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.value += std::abs(d);
    r.grad[i] = sign(d) * inv;
  }
  r.value *= inv;
  return r;
}

LossResult iou_branch_loss(std::span<const double> iou_pred, std::span<const double> gt_iou) {
  PD_CHECK(iou_pred.size() == gt_iou.size(), ErrorCode::kShapeMismatch,
           "IoU loss: ", iou_pred.size(), " predictions for ", gt_iou.size(), " targets");
  LossResult r;
  r.grad.resize(iou_pred.size());
  if (iou_pred.empty()) return r;
  const double inv = 1.0 / static_cast<double>(iou_pred.size());
  for (std::size_t i = 0; i < iou_pred.size(); ++i) {
    PD_CHECK(iou_pred[i] >= -1.0 && iou_pred[i] <= 1.0, ErrorCode::kInvalidArgument,
             "IoU prediction ", iou_pred[i], " outside [-1, 1]");
    PD_CHECK(gt_iou[i] >= 0.0 && gt_iou[i] <= 1.0, ErrorCode::kInvalidArgument, "IoU target ",
             gt_iou[i], " outside [0, 1]");
    const double d = iou_pred[i] - 2.0 * (gt_iou[i] - 0.5);
    r.value += std::abs(d);
    r.grad[i] = sign(d) * inv;
  }
  r.value *= inv;
  return r;
}

DiouResult diou_loss(const Box3D& pred, const Box3D& gt) {
  PD_CHECK(pred.valid() && gt.valid(), ErrorCode::kInvalidArgument,
           "DIoU needs boxes with positive, finite extent");
  using D = Dual<5>;
  using dethead::Rect;
  const Rect<D> a{D::variable(pred.cx, 0), D::variable(pred.cy, 1), D::variable(pred.l, 2),
                  D::variable(pred.w, 3), D::variable(pred.yaw, 4)};
  const Rect<D> b{D(gt.cx), D(gt.cy), D(gt.l), D(gt.w), D(gt.yaw)};

  const D iou = dethead::rotated_iou(a, b);
  const auto ca = dethead::corners(a);
  const auto cb = dethead::corners(b);
  D x_lo = ca[0].x, x_hi = ca[0].x, y_lo = ca[0].y, y_hi = ca[0].y;
  auto extend = [&](const dethead::Vec2<D>& p) {
    if (p.x < x_lo) x_lo = p.x;
    if (p.x > x_hi) x_hi = p.x;
    if (p.y < y_lo) y_lo = p.y;
    if (p.y > y_hi) y_hi = p.y;
  };
  for (const auto& p : ca) extend(p);
  for (const auto& p : cb) extend(p);
  const D ex = x_hi - x_lo, ey = y_hi - y_lo;
  const D c2 = ex * ex + ey * ey;
  const D dx = a.cx - b.cx, dy = a.cy - b.cy;
  const D d2 = dx * dx + dy * dy;
  const D loss = D(1.0) - iou + d2 / c2;

  DiouResult r;
  r.value = loss.v;
  r.grad = {loss.d[0], loss.d[1], 0.0, loss.d[2], loss.d[3], 0.0, loss.d[4]};
  return r;
}

double total_loss(const LossParts& parts, const LossWeights& w) {
  w.validate();
  PD_CHECK(std::isfinite(parts.cls) && std::isfinite(parts.iou) && std::isfinite(parts.diou) &&
               std::isfinite(parts.reg),
           ErrorCode::kInvalidArgument, "loss parts must be finite");
  return w.cls * parts.cls + w.iou * parts.iou + w.reg * (parts.diou + parts.reg);
}

}  // namespace pillardet::losses

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

// Rotated-rectangle geometry in the BEV plane.
//
// Everything is templated on the scalar so the same code path runs on plain
// doubles and on forward-mode dual numbers (see losses/dual.hpp), which gives
// exact piecewise derivatives of the intersection area.

#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "common/types.hpp"

namespace pillardet::dethead {

template <typename T>
struct Vec2 {
  T x, y;
};

/// BEV rectangle: center, length along the heading, width across, heading.
template <typename T>
struct Rect {
  T cx, cy, l, w, yaw;
};

template <typename T>
Rect<T> bev_rect(const Box3D& b) {
  return Rect<T>{T(b.cx), T(b.cy), T(b.l), T(b.w), T(b.yaw)};
}

/// Corners in counter-clockwise order.
template <typename T>
std::array<Vec2<T>, 4> corners(const Rect<T>& r) {
  using std::cos;
  using std::sin;
  const T c = cos(r.yaw), s = sin(r.yaw);
  const T hl = r.l / 2.0, hw = r.w / 2.0;
  const std::array<double, 4> su{1.0, -1.0, -1.0, 1.0};
  const std::array<double, 4> sv{1.0, 1.0, -1.0, -1.0};
  std::array<Vec2<T>, 4> out;
  for (int k = 0; k < 4; ++k) {
    const T u = hl * su[k], v = hw * sv[k];
    out[k] = Vec2<T>{r.cx + c * u - s * v, r.cy + s * u + c * v};
  }
  return out;
}

template <typename T>
T cross(const Vec2<T>& o, const Vec2<T>& a, const Vec2<T>& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

/// Shoelace area of a simple polygon (positive for CCW).
template <typename T>
T polygon_area(const std::vector<Vec2<T>>& poly) {
  T a(0.0);
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    a = a + (p.x * q.y - q.x * p.y);
  }
  return a / 2.0;
}

/// Sutherland-Hodgman: clip `subject` by the convex CCW polygon `clip`.
template <typename T, std::size_t N>
std::vector<Vec2<T>> clip_polygon(const std::vector<Vec2<T>>& subject,
                                  const std::array<Vec2<T>, N>& clip) {
  std::vector<Vec2<T>> out = subject;
  for (std::size_t e = 0; e < N && !out.empty(); ++e) {
    const Vec2<T>& a = clip[e];
    const Vec2<T>& b = clip[(e + 1) % N];
    std::vector<Vec2<T>> in = std::move(out);
    out.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Vec2<T>& p = in[i];
      const Vec2<T>& q = in[(i + 1) % in.size()];
      const T dp = cross(a, b, p);
      const T dq = cross(a, b, q);
      const bool p_in = dp >= 0.0;
      const bool q_in = dq >= 0.0;
      if (p_in) out.push_back(p);
      if (p_in != q_in) {
        const T t = dp / (dp - dq);
        out.push_back(Vec2<T>{p.x + (q.x - p.x) * t, p.y + (q.y - p.y) * t});
      }
    }
  }
  return out;
}

template <typename T>
T intersection_area(const Rect<T>& a, const Rect<T>& b) {
  const auto ca = corners(a);
  const auto cb = corners(b);
  std::vector<Vec2<T>> subject(ca.begin(), ca.end());
  const auto poly = clip_polygon(subject, cb);
  if (poly.size() < 3) return T(0.0);
  return polygon_area(poly);
}

/// Exact IoU of two rotated BEV rectangles.
template <typename T>
T rotated_iou(const Rect<T>& a, const Rect<T>& b) {
  const T inter = intersection_area(a, b);
  const T uni = a.l * a.w + b.l * b.w - inter;
  return inter / uni;
}

/// IoU of the BEV footprints. Throws on zero-area boxes.
double rotated_iou_bev(const Box3D& a, const Box3D& b);

/// Volumetric IoU: BEV intersection area times vertical overlap.
double iou_3d(const Box3D& a, const Box3D& b);

}  // namespace pillardet::dethead

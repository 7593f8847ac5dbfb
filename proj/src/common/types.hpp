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

#include <cmath>
#include <numbers>

#include "common/error.hpp"

namespace pillardet {

/// Axis-aligned spatial extent in meters. Every axis is half-open: [min, max).
struct Range3D {
  double x_min = 0.0, x_max = 0.0;
  double y_min = 0.0, y_max = 0.0;
  double z_min = 0.0, z_max = 0.0;

  bool valid() const {
    return std::isfinite(x_min) && std::isfinite(x_max) && std::isfinite(y_min) &&
           std::isfinite(y_max) && std::isfinite(z_min) && std::isfinite(z_max) &&
           x_min < x_max && y_min < y_max && z_min < z_max;
  }

  void validate() const {
    PD_CHECK(valid(), ErrorCode::kInvalidArgument,
             "invalid range: every axis needs finite min < max");
  }

  bool contains(double x, double y, double z) const {
    return x >= x_min && x < x_max && y >= y_min && y < y_max && z >= z_min && z < z_max;
  }

  bool operator==(const Range3D&) const = default;
};

/// Wraps an angle into [-pi, pi).
inline double normalize_yaw(double yaw) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  if (yaw >= -std::numbers::pi && yaw < std::numbers::pi) return yaw;
  double r = std::fmod(yaw + std::numbers::pi, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  r -= std::numbers::pi;
  // fmod can land exactly on +pi after the shift for inputs just below -pi.
  if (r >= std::numbers::pi) r -= kTwoPi;
  return r;
}

/// Oriented 3D box: center, size along the heading (l) and across it (w),
/// height, heading angle around +z and class index.
struct Box3D {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  double l = 1.0, w = 1.0, h = 1.0;
  double yaw = 0.0;
  int class_id = 0;

  bool valid() const {
    return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(cz) && std::isfinite(yaw) &&
           std::isfinite(l) && std::isfinite(w) && std::isfinite(h) && l > 0.0 && w > 0.0 &&
           h > 0.0;
  }

  void validate() const {
    PD_CHECK(valid(), ErrorCode::kInvalidArgument,
             "invalid box: sizes must be positive and all fields finite");
  }

  bool operator==(const Box3D&) const = default;
};

}  // namespace pillardet

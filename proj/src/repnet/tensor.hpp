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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "common/error.hpp"

namespace pillardet::repnet {

struct Shape4 {
  int n = 0, c = 0, h = 0, w = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::string str() const;
  bool operator==(const Shape4&) const = default;
};

/// Row-major NCHW float32 tensor.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape4 shape, float fill = 0.f);
  DenseTensor(int n, int c, int h, int w, float fill = 0.f) : DenseTensor(Shape4{n, c, h, w}, fill) {}

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  float& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  float at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  float* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const float* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  bool all_finite() const;

 private:
  Shape4 shape_{};
  std::vector<float> data_;
};

/// max |a - b| / max(max |b|, tiny); the norm-wise relative discrepancy used by
/// every equivalence check in this library.
double max_relative_discrepancy(const DenseTensor& a, const DenseTensor& reference);

}  // namespace pillardet::repnet

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

#include "pillargrid/pillargrid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace pillardet::pillargrid {

namespace {

// Extents like 150.4 / 0.2 land a hair above an integer in binary floating
// point; the tolerance keeps ceil() from adding a phantom column.
int cell_count(double extent, double size) {
  return std::max(1, static_cast<int>(std::ceil(extent / size - 1e-9)));
}

}  // namespace

int GridConfig::nx() const { return cell_count(range.x_max - range.x_min, pillar_x); }
int GridConfig::ny() const { return cell_count(range.y_max - range.y_min, pillar_y); }

void GridConfig::validate() const {
  range.validate();
  PD_CHECK(std::isfinite(pillar_x) && std::isfinite(pillar_y) && pillar_x > 0.0 && pillar_y > 0.0,
           ErrorCode::kInvalidArgument, "pillar sizes must be positive");
}

namespace {

struct Keyed {
  std::uint64_t key;
  std::size_t index;
};

void key_points(const pointcloud::PointCloud& cloud, const GridConfig& cfg, std::size_t begin,
                std::size_t end, std::vector<Keyed>& out) {
  const int nx = cfg.nx();
  const int ny = cfg.ny();
  const Range3D& r = cfg.range;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& p = cloud.points[i];
    PD_CHECK(r.contains(p.x, p.y, p.z), ErrorCode::kOutOfRange, "point ", i, " (", p.x, ", ",
             p.y, ", ", p.z, ") lies outside the grid range");
    const int ix = std::min(nx - 1, static_cast<int>(std::floor((p.x - r.x_min) / cfg.pillar_x)));
    const int iy = std::min(ny - 1, static_cast<int>(std::floor((p.y - r.y_min) / cfg.pillar_y)));
    out.push_back({static_cast<std::uint64_t>(iy) * nx + ix, i});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Keyed& a, const Keyed& b) { return a.key < b.key; });
}

}  // namespace

std::vector<Pillar> assign_pillars(const pointcloud::PointCloud& cloud, const GridConfig& cfg,
                                   unsigned threads) {
  cfg.validate();
  const std::size_t n = cloud.points.size();
  const std::size_t parts = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  std::vector<std::vector<Keyed>> partial(parts);

  if (parts == 1) {
    key_points(cloud, cfg, 0, n, partial[0]);
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(parts);
    for (std::size_t t = 0; t < parts; ++t) {
      const std::size_t begin = n * t / parts;
      const std::size_t end = n * (t + 1) / parts;
      workers.emplace_back([&, t, begin, end] {
        try {
          key_points(cloud, cfg, begin, end, partial[t]);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    // Report the lowest offending index, as the sequential pass would.
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // Partitions cover ascending index ranges, so a stable merge by key keeps
  // every pillar's indices in cloud order.
  std::vector<Keyed> all;
  all.reserve(n);
  for (auto& part : partial) {
    const auto mid = static_cast<std::ptrdiff_t>(all.size());
    all.insert(all.end(), part.begin(), part.end());
    std::inplace_merge(all.begin(), all.begin() + mid, all.end(),
                       [](const Keyed& a, const Keyed& b) { return a.key < b.key; });
  }

  const int nx = cfg.nx();
  std::vector<Pillar> pillars;
  for (std::size_t i = 0; i < all.size();) {
    Pillar p;
    p.ix = static_cast<int>(all[i].key % nx);
    p.iy = static_cast<int>(all[i].key / nx);
    std::size_t j = i;
    for (; j < all.size() && all[j].key == all[i].key; ++j) p.point_indices.push_back(all[j].index);
    pillars.push_back(std::move(p));
    i = j;
  }
  return pillars;
}

std::vector<AugmentedPoint> augment_points(const pointcloud::PointCloud& cloud,
                                           const Pillar& pillar, const GridConfig& cfg) {
  const Range3D& r = cfg.range;
  const double cx = r.x_min + (pillar.ix + 0.5) * cfg.pillar_x;
  const double cy = r.y_min + (pillar.iy + 0.5) * cfg.pillar_y;
  const double cz = 0.5 * (r.z_min + r.z_max);
  std::vector<AugmentedPoint> out;
  out.reserve(pillar.point_indices.size());
  for (std::size_t idx : pillar.point_indices) {
    PD_CHECK(idx < cloud.points.size(), ErrorCode::kOutOfRange, "pillar references point ", idx,
             " of a ", cloud.points.size(), "-point cloud");
    const auto& p = cloud.points[idx];
    const double x = p.x, y = p.y, z = p.z;
    out.push_back({x, y, z, static_cast<double>(p.r), static_cast<double>(p.t), x - cx, y - cy,
                   z - cz, x - r.x_min, y - r.y_min, z - r.z_min});
  }
  return out;
}

BEVCanvas scatter(std::span<const Pillar> pillars, std::span<const std::vector<double>> features,
                  const GridConfig& cfg, int channels) {
  cfg.validate();
  PD_CHECK(pillars.size() == features.size(), ErrorCode::kShapeMismatch, "scatter got ",
           pillars.size(), " pillars but ", features.size(), " feature vectors");
  PD_CHECK(channels > 0, ErrorCode::kInvalidArgument, "canvas needs at least one channel");
  const int nx = cfg.nx(), ny = cfg.ny();
  BEVCanvas canvas{repnet::DenseTensor(1, channels, ny, nx),
                   std::vector<std::uint8_t>(static_cast<std::size_t>(nx) * ny, 0)};
  for (std::size_t k = 0; k < pillars.size(); ++k) {
    const Pillar& p = pillars[k];
    PD_CHECK(p.ix >= 0 && p.ix < nx && p.iy >= 0 && p.iy < ny, ErrorCode::kOutOfRange,
             "pillar (", p.ix, ", ", p.iy, ") is outside the ", nx, "x", ny, " grid");
    PD_CHECK(features[k].size() == static_cast<std::size_t>(channels), ErrorCode::kShapeMismatch,
             "feature ", k, " has ", features[k].size(), " channels, expected ", channels);
    auto& occ = canvas.occupied[static_cast<std::size_t>(p.iy) * nx + p.ix];
    PD_CHECK(occ == 0, ErrorCode::kInvalidArgument, "duplicate pillar (", p.ix, ", ", p.iy, ")");
    occ = 1;
    for (int c = 0; c < channels; ++c) {
      canvas.features.at(0, c, p.iy, p.ix) = static_cast<float>(features[k][c]);
    }
  }
  return canvas;
}

std::vector<std::vector<double>> gather(const BEVCanvas& canvas, std::span<const Pillar> pillars) {
  const auto& t = canvas.features;
  std::vector<std::vector<double>> out;
  out.reserve(pillars.size());
  for (const Pillar& p : pillars) {
    PD_CHECK(p.ix >= 0 && p.ix < t.w() && p.iy >= 0 && p.iy < t.h(), ErrorCode::kOutOfRange,
             "pillar (", p.ix, ", ", p.iy, ") is outside the canvas");
    std::vector<double> f(static_cast<std::size_t>(t.c()));
    for (int c = 0; c < t.c(); ++c) f[c] = t.at(0, c, p.iy, p.ix);
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace pillardet::pillargrid

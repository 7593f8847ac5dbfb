// Copyright 2026 The pillardet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <map>
#include <random>

#include "pillargrid/pillargrid.hpp"

using namespace pillardet;
using namespace pillardet::pillargrid;
using pointcloud::Point;
using pointcloud::PointCloud;

namespace {

GridConfig small_grid() {
  GridConfig g;
  g.range = {0.0, 1.6, 0.0, 1.6, -2.0, 4.0};
  g.pillar_x = g.pillar_y = 0.2;
  return g;
}

PointCloud random_cloud(const Range3D& r, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(r.x_min, r.x_max), uy(r.y_min, r.y_max),
      uz(r.z_min, r.z_max);
  PointCloud c;
  while (c.size() < n) {
    Point p{static_cast<float>(ux(rng)), static_cast<float>(uy(rng)), static_cast<float>(uz(rng)),
            0.5f, 0.f};
    if (r.contains(p.x, p.y, p.z)) c.points.push_back(p);
  }
  return c;
}

}  // namespace

TEST_CASE("grid dimensions") {
  CHECK(small_grid().nx() == 8);
  GridConfig w;
  w.range = {-75.2, 75.2, -75.2, 75.2, -2, 4};
  w.pillar_x = w.pillar_y = 0.2;
  CHECK(w.nx() == 752);
  CHECK(w.ny() == 752);
  GridConfig n;
  n.range = {-54, 54, -54, 54, -5, 3};
  n.pillar_x = n.pillar_y = 0.15;
  CHECK(n.nx() == 720);
}

TEST_CASE("floor arithmetic and shared cells") {
  PointCloud c;
  c.points = {{0.50f, 0.30f, 0.f, 0.f, 0.f}};
  auto pillars = assign_pillars(c, small_grid());
  REQUIRE(pillars.size() == 1);
  CHECK(pillars[0].ix == 2);
  CHECK(pillars[0].iy == 1);

  c.points.push_back({0.55f, 0.35f, 1.f, 0.f, 0.f});
  pillars = assign_pillars(c, small_grid());
  REQUIRE(pillars.size() == 1);
  CHECK(pillars[0].point_indices.size() == 2);
}

TEST_CASE("out-of-range point is rejected with its index") {
  PointCloud c;
  c.points = {{0.1f, 0.1f, 0.f, 0.f, 0.f}, {0.1f, 1.6f, 0.f, 0.f, 0.f}};
  try {
    assign_pillars(c, small_grid());
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kOutOfRange);
    CHECK(std::string(e.what()).find("point 1") != std::string::npos);
  }
}

TEST_CASE("grouping equals a brute-force dictionary and is thread-count invariant") {
  GridConfig g;
  g.range = {-10, 10, -8, 8, -2, 4};
  g.pillar_x = 0.5;
  g.pillar_y = 0.4;
  const auto cloud = random_cloud(g.range, 10000, 4);
  std::map<std::pair<int, int>, std::vector<std::size_t>> naive;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    const int ix = static_cast<int>(std::floor((p.x - g.range.x_min) / g.pillar_x));
    const int iy = static_cast<int>(std::floor((p.y - g.range.y_min) / g.pillar_y));
    naive[{iy, ix}].push_back(i);
  }
  const auto pillars = assign_pillars(cloud, g);
  REQUIRE(pillars.size() == naive.size());
  std::size_t k = 0, total = 0;
  for (const auto& [key, idx] : naive) {
    CHECK(pillars[k].iy == key.first);
    CHECK(pillars[k].ix == key.second);
    CHECK(pillars[k].point_indices == idx);
    total += pillars[k].point_indices.size();
    ++k;
  }
  CHECK(total == cloud.size());
  CHECK(assign_pillars(cloud, g, 3) == pillars);
  CHECK(assign_pillars(cloud, g, 8) == pillars);
}

TEST_CASE("augmented features") {
  const GridConfig g = small_grid();
  PointCloud c;
  // Center of cell (2, 1) at mid-height.
  c.points = {{0.5f, 0.3f, 1.0f, 0.2f, 0.f}};
  auto aug = augment_points(c, assign_pillars(c, g)[0], g);
  CHECK(aug[0][5] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(std::abs(aug[0][6]) < 1e-6);
  CHECK(aug[0][7] == 0.0);

  // (0.95, 0.95, 0) in cell [0.8, 1.0)^2 with z range [-2, 4].
  c.points = {{0.95f, 0.95f, 0.0f, 0.f, 0.f}};
  aug = augment_points(c, assign_pillars(c, g)[0], g);
  CHECK(aug[0][5] == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(aug[0][6] == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(aug[0][7] == doctest::Approx(-1.0));
  CHECK(aug[0][8] == doctest::Approx(0.95).epsilon(1e-6));

  // Exactly on a cell boundary the point belongs to the upper cell.
  c.points = {{1.0f, 1.0f, 0.0f, 0.f, 0.f}};
  const auto p = assign_pillars(c, g)[0];
  CHECK(p.ix == 5);
  aug = augment_points(c, p, g);
  CHECK(aug[0][5] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(aug[0][8] == doctest::Approx(1.0));

  c.points = {{0.f, 0.f, -2.f, 0.f, 0.f}};
  aug = augment_points(c, assign_pillars(c, g)[0], g);
  CHECK(aug[0][8] == 0.0);
  CHECK(aug[0][9] == 0.0);
  CHECK(aug[0][10] == 0.0);
}

TEST_CASE("cell-center offsets stay within half a pillar") {
  GridConfig g;
  g.range = {-20, 20, -20, 20, -2, 4};
  const auto cloud = random_cloud(g.range, 5000, 8);
  for (const auto& p : assign_pillars(cloud, g)) {
    for (const auto& a : augment_points(cloud, p, g)) {
      CHECK(a[5] >= -g.pillar_x / 2 - 1e-6);
      CHECK(a[5] < g.pillar_x / 2 + 1e-6);
      CHECK(a[6] >= -g.pillar_y / 2 - 1e-6);
      CHECK(a[6] < g.pillar_y / 2 + 1e-6);
    }
  }
}

TEST_CASE("scatter") {
  const GridConfig g = small_grid();
  const auto empty = scatter({}, {}, g, 3);
  for (float v : empty.features.values()) CHECK(v == 0.f);

  std::vector<Pillar> one{{2, 1, {0}}};
  std::vector<std::vector<double>> f{{7.0}};
  const auto c = scatter(one, f, g, 1);
  int nonzero = 0;
  for (float v : c.features.values()) nonzero += v != 0.f;
  CHECK(nonzero == 1);
  CHECK(c.features.at(0, 0, 1, 2) == 7.f);
  CHECK(c.occupied[1 * 8 + 2] == 1);

  std::vector<Pillar> dup{{2, 1, {0}}, {2, 1, {1}}};
  std::vector<std::vector<double>> f2{{1.0}, {2.0}};
  CHECK_THROWS_AS(scatter(dup, f2, g, 1), Error);
}

TEST_CASE("scatter conserves mass and gather inverts it") {
  GridConfig g;
  g.range = {-5, 5, -5, 5, -2, 4};
  g.pillar_x = g.pillar_y = 0.5;
  const auto cloud = random_cloud(g.range, 300, 12);
  const auto pillars = assign_pillars(cloud, g);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<std::vector<double>> feats;
  double sum = 0.0;
  for (std::size_t i = 0; i < pillars.size(); ++i) {
    std::vector<double> v(4);
    for (double& x : v) {
      x = static_cast<float>(nd(rng));
      sum += x;
    }
    feats.push_back(v);
  }
  const auto canvas = scatter(pillars, feats, g, 4);
  double canvas_sum = 0.0;
  for (float v : canvas.features.values()) canvas_sum += v;
  CHECK(canvas_sum == doctest::Approx(sum).epsilon(1e-9));
  CHECK(gather(canvas, pillars) == feats);
}

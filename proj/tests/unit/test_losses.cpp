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

#include <algorithm>
#include <cmath>
#include <random>

#include "losses/losses.hpp"
#include "oracles.hpp"

using namespace pillardet;
using namespace pillardet::losses;

namespace {

dethead::HeadGeometry geo20() {
  dethead::HeadGeometry g;
  g.x_min = 0.0;
  g.y_min = 0.0;
  g.cell_x = g.cell_y = 0.8;
  g.h = g.w = 20;
  return g;
}

Box3D make_box(double cx, double cy, double l, double w, double yaw = 0.0, int cls = 0) {
  Box3D b;
  b.cx = cx;
  b.cy = cy;
  b.l = l;
  b.w = w;
  b.h = 1.5;
  b.yaw = yaw;
  b.class_id = cls;
  return b;
}

std::vector<double> box_vec(const Box3D& b) { return {b.cx, b.cy, b.cz, b.l, b.w, b.h, b.yaw}; }

Box3D vec_box(const std::vector<double>& v) {
  Box3D b;
  b.cx = v[0];
  b.cy = v[1];
  b.cz = v[2];
  b.l = v[3];
  b.w = v[4];
  b.h = v[5];
  b.yaw = v[6];
  return b;
}

/// Smallest gap between any pair of parallel edges of two axis-aligned boxes.
double edge_gap(const Box3D& a, const Box3D& b) {
  const double ex[2] = {a.cx - a.l / 2, a.cx + a.l / 2}, fx[2] = {b.cx - b.l / 2, b.cx + b.l / 2};
  const double ey[2] = {a.cy - a.w / 2, a.cy + a.w / 2}, fy[2] = {b.cy - b.w / 2, b.cy + b.w / 2};
  double m = INFINITY;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) m = std::min({m, std::abs(ex[i] - fx[j]), std::abs(ey[i] - fy[j])});
  return m;
}

int count_unit(const Heatmap& h) {
  return static_cast<int>(std::count(h.values.begin(), h.values.end(), 1.0));
}

}  // namespace

TEST_CASE("Gaussian targets") {
  const auto geo = geo20();
  std::vector<Box3D> one{make_box(8.2, 4.5, 4.0, 2.0)};
  const auto t1 = render_gaussian_targets(one, geo, 2);
  CHECK(*std::max_element(t1.heatmap.values.begin(), t1.heatmap.values.end()) == 1.0);
  CHECK(t1.heatmap.values[t1.heatmap.index(0, 5, 10)] == 1.0);
  CHECK(count_unit(t1.heatmap) == 1);
  REQUIRE(t1.objects.size() == 1);
  CHECK(t1.objects[0].cell_x == 10);
  CHECK(t1.objects[0].cell_y == 5);
  CHECK(t1.objects[0].reg[0] == doctest::Approx(8.2 / 0.8 - 10.5));
  CHECK(t1.objects[0].reg[3] == doctest::Approx(std::log(4.0)));
  CHECK(t1.objects[0].reg[7] == doctest::Approx(1.0));
  for (double v : t1.heatmap.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  std::vector<Box3D> two{make_box(2.0, 2.0, 2.0, 2.0), make_box(13.0, 13.0, 2.0, 2.0)};
  CHECK(count_unit(render_gaussian_targets(two, geo, 1).heatmap) == 2);

  std::vector<Box3D> same{make_box(6.0, 6.0, 3.0, 2.0), make_box(6.0, 6.0, 1.0, 1.0)};
  const auto ts = render_gaussian_targets(same, geo, 1);
  CHECK(count_unit(ts.heatmap) == 1);
  const auto a = render_gaussian_targets(std::vector<Box3D>{same[0]}, geo, 1);
  const auto b = render_gaussian_targets(std::vector<Box3D>{same[1]}, geo, 1);
  for (std::size_t i = 0; i < ts.heatmap.values.size(); ++i) {
    CHECK(ts.heatmap.values[i] == std::max(a.heatmap.values[i], b.heatmap.values[i]));
  }

  CHECK(gaussian_radius(10.0, 10.0, 0.7) > gaussian_radius(2.0, 2.0, 0.7));
  std::vector<Box3D> outside{make_box(-1.0, 3.0, 1.0, 1.0)};
  CHECK_THROWS_AS(render_gaussian_targets(outside, geo, 1), Error);
}

TEST_CASE("focal loss") {
  Heatmap target = Heatmap::zeros(1, 4, 4);
  target.values[target.index(0, 1, 2)] = 1.0;
  target.values[target.index(0, 1, 1)] = 0.5;
  Heatmap pred = Heatmap::zeros(1, 4, 4);
  for (double& v : pred.values) v = 1e-4;
  pred.values[pred.index(0, 1, 2)] = 1.0 - 1e-4;
  CHECK(focal_loss(pred, target).value < 1e-6);

  // Mirror-symmetric targets and predictions contribute symmetric terms.
  Heatmap st = Heatmap::zeros(1, 3, 4), sp = Heatmap::zeros(1, 3, 4);
  st.values[st.index(0, 1, 1)] = 1.0;
  st.values[st.index(0, 1, 2)] = 1.0;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 2; ++x) {
      const double v = 0.1 + 0.2 * y + 0.3 * x;
      sp.values[sp.index(0, y, x)] = v;
      sp.values[sp.index(0, y, 3 - x)] = v;
    }
  const auto r = focal_loss(sp, st);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 2; ++x)
      CHECK(r.grad[sp.index(0, y, x)] == doctest::Approx(r.grad[sp.index(0, y, 3 - x)]));

  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int t = 0; t < 10; ++t) {
    const auto tg = render_gaussian_targets(
        std::vector<Box3D>{make_box(u(rng) * 6, u(rng) * 6, 2.0, 1.5)}, [] {
          dethead::HeadGeometry g;
          g.cell_x = g.cell_y = 0.8;
          g.h = g.w = 8;
          return g;
        }(), 2);
    Heatmap p = Heatmap::zeros(2, 8, 8);
    for (double& v : p.values) v = u(rng);
    const auto res = focal_loss(p, tg.heatmap);
    CHECK(res.value >= 0.0);
    const auto fd = oracle::central_diff(
        [&](const std::vector<double>& x) {
          Heatmap q = p;
          q.values = x;
          return focal_loss(q, tg.heatmap).value;
        },
        p.values, 1e-6);
    CHECK(oracle::rel_discrepancy(res.grad, fd) < 1e-4);
  }
  CHECK_THROWS_AS(focal_loss(Heatmap::zeros(1, 2, 2), Heatmap::zeros(1, 2, 3)), Error);
}

TEST_CASE("L1 regression loss") {
  std::vector<double> p{0.1, 0.2, 0.3}, t = p;
  CHECK(reg_l1_loss(p, t, 3).value == 0.0);
  t[1] = 0.7;
  CHECK(reg_l1_loss(p, t, 3).value == doctest::Approx(0.5));
  CHECK_THROWS_AS(reg_l1_loss(std::vector<double>{}, std::vector<double>{}, 3), Error);
  CHECK_THROWS_AS(reg_l1_loss(p, std::vector<double>{0.0}, 3), Error);

  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t2 = 0; t2 < 10; ++t2) {
    const int matches = 1 + t2 % 4;
    std::vector<double> pr(matches * kRegChannels), tg(pr.size());
    for (std::size_t i = 0; i < pr.size(); ++i) {
      tg[i] = u(rng);
      do pr[i] = u(rng); while (std::abs(pr[i] - tg[i]) < 1e-2);
    }
    const auto res = reg_l1_loss(pr, tg, kRegChannels);
    for (std::size_t i = 0; i < pr.size(); ++i) {
      CHECK(res.grad[i] == (pr[i] > tg[i] ? 1.0 : -1.0) / matches);
    }
    const auto fd = oracle::central_diff(
        [&](const std::vector<double>& x) { return reg_l1_loss(x, tg, kRegChannels).value; }, pr,
        1e-4);
    CHECK(oracle::rel_discrepancy(res.grad, fd) < 1e-4);
  }
}

TEST_CASE("IoU branch loss") {
  CHECK(iou_branch_loss(std::vector<double>{0.0}, std::vector<double>{0.5}).value == 0.0);
  CHECK(iou_branch_loss(std::vector<double>{1.0}, std::vector<double>{1.0}).value == 0.0);
  CHECK(iou_branch_loss(std::vector<double>{0.1}, std::vector<double>{0.75}).value ==
        doctest::Approx(0.4).epsilon(1e-12));
  const auto r = iou_branch_loss(std::vector<double>{0.1, -0.9}, std::vector<double>{0.75, 0.0});
  CHECK(r.value == doctest::Approx((0.4 + 0.1) / 2));
  CHECK(r.grad[0] == doctest::Approx(-0.5));
  CHECK(r.grad[1] == doctest::Approx(0.5));
}

TEST_CASE("DIoU loss") {
  const Box3D a = make_box(1.0, 2.0, 3.0, 1.5, 0.4);
  const auto same = diou_loss(a, a);
  CHECK(same.value == doctest::Approx(0.0).epsilon(1e-12));

  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> c(-3, 3), s(0.5, 4), yaw(-3.1, 3.1), dir(-1, 1);
  int axis_checked = 0, rot_checked = 0;
  for (int t = 0; t < 400; ++t) {
    Box3D p = make_box(c(rng), c(rng), s(rng), s(rng));
    Box3D g = make_box(c(rng), c(rng), s(rng), s(rng));
    const auto r = diou_loss(p, g);
    CHECK(r.value >= 0.0);
    CHECK(r.value < 2.0);
    CHECK(std::abs(r.value - oracle::diou_axis_aligned(p, g)) < 1e-6);
    if (edge_gap(p, g) > 1e-2 && axis_checked < 50) {
      ++axis_checked;
      const auto fd = oracle::central_diff(
          [&](const std::vector<double>& v) { return diou_loss(vec_box(v), g).value; }, box_vec(p),
          1e-4);
      // Yaw is a kink for axis-aligned pairs (extreme corners swap), so only
      // the translation and size slots are compared here.
      std::vector<double> ga(r.grad.begin(), r.grad.begin() + 6), fa(fd.begin(), fd.begin() + 6);
      CHECK(oracle::rel_discrepancy(ga, fa) < 1e-4);
    }

    p.yaw = yaw(rng);
    g.yaw = yaw(rng);
    if (oracle::diou_kink_margin(p, g) > 1e-2 && rot_checked < 50) {
      ++rot_checked;
      const auto rr = diou_loss(p, g);
      std::vector<double> d(7);
      for (double& x : d) x = dir(rng);
      d[2] = d[5] = 0.0;
      double analytic = 0.0;
      for (int k = 0; k < 7; ++k) analytic += rr.grad[k] * d[k];
      auto along = [&](double step) {
        auto v = box_vec(p);
        for (int k = 0; k < 7; ++k) v[k] += step * d[k];
        return diou_loss(vec_box(v), g).value;
      };
      const double h = 1e-4;
      const double numeric = (along(h) - along(-h)) / (2 * h);
      CHECK(std::abs(analytic - numeric) <= 1e-3 * std::max(1.0, std::abs(numeric)));
    }
  }
  CHECK(axis_checked >= 20);
  CHECK(rot_checked >= 20);
  CHECK(diou_loss(a, a).grad[2] == 0.0);

  Box3D bad = a;
  bad.w = 0.0;
  CHECK_THROWS_AS(diou_loss(bad, a), Error);
}

TEST_CASE("total loss") {
  CHECK(total_loss({}) == 0.0);
  CHECK(total_loss({1, 1, 1, 1}) == doctest::Approx(2.5));
  LossWeights no_reg;
  no_reg.reg = 0.0;
  CHECK(total_loss({0.3, 0.2, 9.0, 4.0}, no_reg) == total_loss({0.3, 0.2, 0.0, 0.0}, no_reg));
  const LossParts parts{0.7, 0.3, 0.5, 1.1};
  for (double k : {0.5, 2.0, 3.0}) {
    LossWeights w;
    w.cls = k;
    LossWeights base;
    base.cls = 0.0;
    CHECK(total_loss(parts, w) == doctest::Approx(total_loss(parts, base) + k * parts.cls));
  }
  CHECK_THROWS_AS(total_loss({NAN, 0, 0, 0}), Error);
  LossWeights neg;
  neg.iou = -1.0;
  CHECK_THROWS_AS(total_loss(parts, neg), Error);
}

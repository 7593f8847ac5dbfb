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

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"

using namespace pillardet;
using namespace pillardet::dethead;

namespace {

HeadGeometry small_geo(int h = 10, int w = 12) {
  HeadGeometry g;
  g.x_min = -4.8;
  g.y_min = -4.0;
  g.cell_x = 0.8;
  g.cell_y = 0.8;
  g.h = h;
  g.w = w;
  return g;
}

Box3D random_box(std::mt19937_64& rng, double spread = 3.0) {
  std::uniform_real_distribution<double> c(-spread, spread), s(0.5, 4.0), yaw(-3.14, 3.14);
  Box3D b;
  b.cx = c(rng);
  b.cy = c(rng);
  b.cz = c(rng) * 0.3;
  b.l = s(rng);
  b.w = s(rng);
  b.h = s(rng);
  b.yaw = yaw(rng);
  return b;
}

Box3D axis_box(double cx, double cy, double l, double w) {
  Box3D b;
  b.cx = cx;
  b.cy = cy;
  b.l = l;
  b.w = w;
  return b;
}

}  // namespace

TEST_CASE("rectify_score") {
  CHECK(rectify_score(0.64, 0.25, 0.5) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(rectify_score(1.0, 1.0, 0.5) == 1.0);
  CHECK(rectify_score(0.37, 0.9, 0.0) == 0.37);
  CHECK(rectify_score(0.37, 0.9, 1.0) == 0.9);
  CHECK(rectify_score(0.5, 0.0, 0.5) == 0.0);

  double prev = 0.0;
  for (double c = 0.05; c <= 1.0; c += 0.05) {
    const double v = rectify_score(c, 0.6, 0.68);
    CHECK(v >= prev);
    prev = v;
  }
  prev = 0.0;
  for (double i = 0.0; i <= 1.0; i += 0.05) {
    const double v = rectify_score(0.6, i, 0.71);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK_THROWS_AS(rectify_score(0.0, 0.5, 0.5), Error);
  CHECK_THROWS_AS(rectify_score(1.1, 0.5, 0.5), Error);
  CHECK_THROWS_AS(rectify_score(0.5, -0.1, 0.5), Error);
  CHECK_THROWS_AS(rectify_score(0.5, 0.5, 1.5), Error);
}

TEST_CASE("rotated IoU") {
  std::mt19937_64 rng(11);
  const Box3D a = random_box(rng);
  CHECK(rotated_iou_bev(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  Box3D far = a;
  far.cx += 100.0;
  CHECK(rotated_iou_bev(a, far) == 0.0);

  // Axis-aligned closed form: overlap 1x2 of boxes 2x2 and 2x2 -> 2 / 6.
  CHECK(rotated_iou_bev(axis_box(0, 0, 2, 2), axis_box(1, 0, 2, 2)) ==
        doctest::Approx(2.0 / 6.0).epsilon(1e-12));
  // Square rotated by 45 degrees inside a larger square.
  Box3D diamond = axis_box(0, 0, 1, 1);
  diamond.yaw = std::numbers::pi / 4;
  CHECK(rotated_iou_bev(diamond, axis_box(0, 0, 4, 4)) == doctest::Approx(1.0 / 16.0).epsilon(1e-12));

  for (int t = 0; t < 200; ++t) {
    const Box3D p = random_box(rng, 1.5), q = random_box(rng, 1.5);
    const double iou = rotated_iou_bev(p, q);
    CHECK(iou >= 0.0);
    CHECK(iou <= 1.0);
    CHECK(std::abs(iou - rotated_iou_bev(q, p)) < 1e-9);

    std::uniform_real_distribution<double> u(-5, 5);
    const double th = u(rng), tx = u(rng), ty = u(rng);
    auto move = [&](Box3D b) {
      const double x = b.cx, y = b.cy;
      b.cx = std::cos(th) * x - std::sin(th) * y + tx;
      b.cy = std::sin(th) * x + std::cos(th) * y + ty;
      b.yaw += th;
      return b;
    };
    CHECK(std::abs(iou - rotated_iou_bev(move(p), move(q))) < 1e-9);

    Box3D ap = p, aq = q;
    ap.yaw = aq.yaw = 0.0;
    const double ix = std::max(0.0, std::min(ap.cx + ap.l / 2, aq.cx + aq.l / 2) -
                                        std::max(ap.cx - ap.l / 2, aq.cx - aq.l / 2));
    const double iy = std::max(0.0, std::min(ap.cy + ap.w / 2, aq.cy + aq.w / 2) -
                                        std::max(ap.cy - ap.w / 2, aq.cy - aq.w / 2));
    const double inter = ix * iy;
    CHECK(std::abs(rotated_iou_bev(ap, aq) - inter / (ap.l * ap.w + aq.l * aq.w - inter)) < 1e-9);
  }

  for (int t = 0; t < 10; ++t) {
    const Box3D p = random_box(rng, 1.0), q = random_box(rng, 1.0);
    CHECK(std::abs(rotated_iou_bev(p, q) - oracle::monte_carlo_iou(p, q, 200000, rng)) < 1e-2);
  }

  Box3D flat = a;
  flat.l = 0.0;
  CHECK_THROWS_AS(rotated_iou_bev(a, flat), Error);
}

TEST_CASE("3D IoU") {
  Box3D a = axis_box(0, 0, 2, 2);
  a.h = 2;
  Box3D b = a;
  b.cz = 1.0;
  CHECK(iou_3d(a, b) == doctest::Approx(4.0 / 12.0).epsilon(1e-12));
  CHECK(iou_3d(a, a) == doctest::Approx(1.0));
  b.cz = 5.0;
  CHECK(iou_3d(a, b) == 0.0);
}

TEST_CASE("decode fixtures") {
  const auto geo = small_geo();
  auto out = HeadOutput::zeros(3, geo.h, geo.w);
  CHECK(decode(out, geo, {}).empty());

  out.heat(1, 3, 4) = 0.9;
  for (int ch = 0; ch < 3; ++ch) out.size[ch * out.plane() + out.cell(3, 4)] = std::log(2.0);
  out.yaw[out.plane() + out.cell(3, 4)] = 1.0;
  out.iou[out.cell(3, 4)] = 0.5;
  const auto d = decode(out, geo, {});
  REQUIRE(d.size() == 1);
  CHECK(d[0].box.class_id == 1);
  CHECK(d[0].box.cx == doctest::Approx(geo.x_min + 4.5 * geo.cell_x).epsilon(1e-12));
  CHECK(d[0].box.cy == doctest::Approx(geo.y_min + 3.5 * geo.cell_y).epsilon(1e-12));
  CHECK(d[0].box.l == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(d[0].box.w == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(d[0].box.h == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(d[0].box.yaw == 0.0);
  CHECK(d[0].cls_score == 0.9);
  CHECK(d[0].iou_score == doctest::Approx(0.75));
  CHECK(d[0].final_score == doctest::Approx(std::sqrt(0.9 * 0.75)));

  DecodeOptions opt;
  opt.score_thresh = 0.9;
  CHECK(decode(out, geo, opt).empty());
}

TEST_CASE("decode tie-break and top-k") {
  const auto geo = small_geo();
  auto out = HeadOutput::zeros(2, geo.h, geo.w);
  out.heat(0, 6, 2) = 0.5;
  out.heat(0, 2, 8) = 0.5;
  out.heat(1, 2, 1) = 0.5;
  out.heat(1, 7, 7) = 0.7;
  DecodeOptions opt;
  opt.max_detections = 1;
  auto d = decode(out, geo, opt);
  REQUIRE(d.size() == 1);
  CHECK(d[0].cls_score == 0.7);
  opt.max_detections = 4;
  d = decode(out, geo, opt);
  REQUIRE(d.size() == 4);
  CHECK(d[1].box.class_id == 0);
  CHECK(d[1].box.cy == doctest::Approx(geo.y_min + 2.5 * geo.cell_y));
  CHECK(d[2].box.class_id == 0);
  CHECK(d[3].box.class_id == 1);

  // Non-maximum neighbours are dropped.
  auto n = HeadOutput::zeros(1, geo.h, geo.w);
  n.heat(0, 4, 4) = 0.8;
  n.heat(0, 4, 5) = 0.6;
  CHECK(decode(n, geo, {}).size() == 1);
  CHECK_THROWS_AS(decode(n, small_geo(9, 12), {}), Error);
}

TEST_CASE("NMS") {
  Detection one;
  one.box = axis_box(0, 0, 2, 2);
  one.final_score = 0.3;
  CHECK(nms(std::vector<Detection>{one}, {}).size() == 1);

  Detection lo = one, hi = one;
  hi.final_score = 0.8;
  const auto kept = nms(std::vector<Detection>{lo, hi}, {});
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].final_score == 0.8);

  Detection other = hi;
  other.box.class_id = 1;
  CHECK(nms(std::vector<Detection>{lo, hi, other}, {}).size() == 2);
  NmsOptions agn;
  agn.class_agnostic = true;
  CHECK(nms(std::vector<Detection>{lo, hi, other}, agn).size() == 1);

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> sc(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<Detection> dets(1 + t % 30);
    for (auto& d : dets) {
      d.box = random_box(rng, 2.0);
      d.box.class_id = static_cast<int>(rng() % 3);
      d.final_score = std::round(sc(rng) * 10) / 10;
    }
    NmsOptions opt;
    opt.iou_thresh = {0.8, 0.55, 0.55};
    opt.class_agnostic = t % 2 == 1;
    const auto got = nms(dets, opt);
    const auto ref = oracle::naive_nms(dets, opt.iou_thresh, opt.class_agnostic,
                                       [](const Box3D& a, const Box3D& b) { return rotated_iou_bev(a, b); });
    REQUIRE(got.size() == ref.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].box == dets[ref[i]].box);
    for (std::size_t i = 0; i < got.size(); ++i)
      for (std::size_t j = i + 1; j < got.size(); ++j) {
        if (!opt.class_agnostic && got[i].box.class_id != got[j].box.class_id) continue;
        CHECK(rotated_iou_bev(got[i].box, got[j].box) <= opt.iou_thresh[got[i].box.class_id]);
      }
  }
}

TEST_CASE("render then decode reproduces boxes") {
  const auto geo = small_geo(40, 40);
  std::mt19937_64 rng(13);
  for (int t = 0; t < 20; ++t) {
    std::vector<Box3D> boxes;
    std::uniform_real_distribution<double> ux(-4.0, 26.0), uy(-3.0, 27.0);
    while (boxes.size() < 4) {
      Box3D b = random_box(rng);
      b.cx = ux(rng);
      b.cy = uy(rng);
      b.class_id = static_cast<int>(rng() % 2);
      bool clear = true;
      for (const auto& o : boxes) clear &= std::hypot(o.cx - b.cx, o.cy - b.cy) > 4.0;
      if (clear) boxes.push_back(b);
    }
    const auto out = render_head_output(boxes, geo, 2);
    const auto dets = decode(out, geo, {});
    REQUIRE(dets.size() == boxes.size());
    for (const auto& b : boxes) {
      bool found = false;
      for (const auto& d : dets) {
        if (d.box.class_id != b.class_id) continue;
        if (std::abs(d.box.cx - b.cx) > geo.cell_x / 2 || std::abs(d.box.cy - b.cy) > geo.cell_y / 2)
          continue;
        found = true;
        CHECK(std::abs(d.box.l - b.l) < 1e-6);
        CHECK(std::abs(d.box.w - b.w) < 1e-6);
        CHECK(std::abs(d.box.h - b.h) < 1e-6);
        CHECK(std::abs(normalize_yaw(d.box.yaw - b.yaw)) < 1e-6);
        CHECK(d.iou_score == 1.0);
      }
      CHECK(found);
    }
  }
  std::vector<Box3D> outside{axis_box(100, 0, 1, 1)};
  CHECK_THROWS_AS(render_head_output(outside, geo, 1), Error);
}

TEST_CASE("head forward") {
  std::mt19937_64 rng(14);
  const auto p = init_head(8, 3, true, rng);
  repnet::DenseTensor x(1, 8, 5, 7);
  std::normal_distribution<float> nd;
  for (float& v : x.values()) v = nd(rng);
  const auto out = head_forward(x, p);
  CHECK(out.classes == 3);
  CHECK(out.h == 5);
  CHECK(out.w == 7);
  out.validate();
  for (double v : out.heatmap) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  for (double v : out.iou) CHECK(std::abs(v) <= 1.0);

  const auto prior = head_forward(repnet::DenseTensor(1, 8, 2, 2), init_head(8, 1, false, rng));
  CHECK(prior.heatmap[0] == doctest::Approx(1.0 / (1.0 + std::exp(2.19))).epsilon(1e-6));
  CHECK_THROWS_AS(head_forward(repnet::DenseTensor(1, 4, 5, 7), p), Error);
}

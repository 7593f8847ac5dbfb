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

#include <filesystem>
#include <fstream>

#include "model/model.hpp"

using namespace pillardet;
using namespace pillardet::model;
namespace fs = std::filesystem;

namespace {

Profile tiny_profile() {
  Profile p = waymo_profile();
  p.grid.range = Range3D{-9.6, 9.6, -9.6, 9.6, -2.0, 4.0};
  p.backbone.stage_blocks = {1, 1, 1, 1};
  p.backbone.stage_channels = {8, 16, 32, 64};
  p.backbone.in_channels = 8;
  p.neck_channels = 16;
  return p;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pillardet_test_model";
  fs::create_directories(dir);
  return dir / name;
}

pointcloud::Scene tiny_scene(std::uint64_t seed, int objects) {
  pointcloud::SceneSpec s;
  s.range = Range3D{-9.0, 9.0, -9.0, 9.0, -2.0, 4.0};
  s.num_objects = objects;
  s.points_per_object = 60;
  s.background_points = 400;
  return pointcloud::generate_scene(s, seed);
}

}  // namespace

TEST_CASE("built-in profiles") {
  const auto w = waymo_profile();
  CHECK(w.grid.range == Range3D{-75.2, 75.2, -75.2, 75.2, -2.0, 4.0});
  CHECK(w.grid.pillar_x == 0.2);
  CHECK(w.grid.nx() == 752);
  CHECK(w.alpha == std::vector<double>{0.68, 0.71, 0.65});
  CHECK(w.nms_iou == std::vector<double>{0.8, 0.55, 0.55});
  CHECK_FALSE(w.class_agnostic);
  CHECK(w.classes() == 3);
  CHECK(w.backbone.stage_blocks == std::array<int, 4>{6, 6, 3, 1});
  CHECK(w.loss_weights.cls == 1.0);
  CHECK(w.loss_weights.iou == 1.0);
  CHECK(w.loss_weights.reg == 0.25);
  CHECK(w.head_geometry().w == 188);

  const auto n = nuscenes_profile();
  CHECK(n.grid.range == Range3D{-54.0, 54.0, -54.0, 54.0, -5.0, 3.0});
  CHECK(n.grid.pillar_x == 0.15);
  CHECK(n.grid.nx() == 720);
  CHECK(n.class_agnostic);
  CHECK(n.score_thresh == 0.2);
  CHECK(n.alpha == std::vector<double>{0.5});
  CHECK(n.classes() == 10);

  CHECK_THROWS_AS(builtin_profile("kitti"), Error);
}

TEST_CASE("profile overrides") {
  const auto p = apply_overrides(waymo_profile(), nlohmann::json::parse(R"({
      "range": [-8, 8, -8, 8, -1, 3], "pillar_size": [0.4, 0.4],
      "backbone": {"stage_blocks": [0, 2, 2, 2]}, "neck_channels": 32})"));
  CHECK(p.grid.nx() == 40);
  CHECK(p.backbone.stage_blocks == std::array<int, 4>{0, 2, 2, 2});
  CHECK(p.neck_channels == 32);
  CHECK(apply_overrides(waymo_profile(), profile_to_json(p)).grid == p.grid);

  try {
    apply_overrides(waymo_profile(), nlohmann::json::parse(R"({"ranges": [0]})"));
    FAIL("unknown key accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
    CHECK(std::string(e.what()).find("ranges") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_overrides(waymo_profile(), nlohmann::json::parse(R"({"alpha": [1.5]})")),
                  Error);
  CHECK_THROWS_AS(load_profile("waymo", scratch("missing.json")), Error);
}

TEST_CASE("checkpoint round trip") {
  const auto cfg = config_from_profile(tiny_profile());
  const auto train = init_model(cfg, repnet::InitKind::kRandom, 5);
  const auto fused = fuse_model(train);
  for (const auto* m : {&train, &fused}) {
    const auto path = scratch(m->fused() ? "fused.json" : "train.json");
    save_checkpoint(*m, path);
    const auto back = load_checkpoint(path);
    CHECK(back.config == m->config);
    CHECK(back.fused() == m->fused());
    CHECK(back.mape.encode[0].weight.data == m->mape.encode[0].weight.data);
    CHECK(back.head.heatmap.kernel == m->head.heatmap.kernel);
    CHECK(probe_fusion(back, fused, 1, 3, 16, 16).max_discrepancy < 1e-4);
  }

  const auto path = scratch("corrupt.json");
  save_checkpoint(train, path);
  {
    std::ofstream out(path, std::ios::trunc);
    out << "{\"format\": \"pillardet-checkpoint\", \"version\": ";
  }
  try {
    load_checkpoint(path);
    FAIL("corrupt manifest accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
  }
  CHECK_THROWS_AS(load_checkpoint(scratch("nothing.json")), Error);

  // A truncated blob is rejected.
  save_checkpoint(train, path);
  fs::path blob = path;
  blob.replace_extension(".bin");
  fs::resize_file(blob, fs::file_size(blob) / 2);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
}

TEST_CASE("fusion probes") {
  const auto cfg = config_from_profile(tiny_profile());
  const auto neutral = init_model(cfg, repnet::InitKind::kNeutral, 1);
  CHECK(probe_fusion(neutral, fuse_model(neutral), 3, 9).max_discrepancy == 0.0);
  const auto random = init_model(cfg, repnet::InitKind::kRandom, 2);
  const auto rep = probe_fusion(random, fuse_model(random), 3, 9);
  CHECK(rep.probes == 3);
  CHECK(rep.max_discrepancy < 1e-4);
}

TEST_CASE("detect") {
  const auto profile = tiny_profile();
  const auto params = fuse_model(init_model(config_from_profile(profile), repnet::InitKind::kRandom, 4));

  const auto empty = detect(pointcloud::PointCloud{}, params, profile);
  CHECK(empty.detections.empty());
  CHECK(empty.pillars == 0);

  const auto scene = tiny_scene(3, 4);
  const auto a = detect(scene.cloud, params, profile);
  const auto b = detect(scene.cloud, params, profile);
  CHECK(a.points_in_range == scene.cloud.size());
  CHECK(a.pillars > 0);
  REQUIRE(a.detections.size() == b.detections.size());
  for (std::size_t i = 0; i < a.detections.size(); ++i) {
    CHECK(a.detections[i].box == b.detections[i].box);
    CHECK(a.detections[i].final_score == b.detections[i].final_score);
  }

  // Points outside the range are cropped, not rejected.
  auto wide = scene.cloud;
  wide.points.push_back({50.f, 0.f, 0.f, 0.f, 0.f});
  CHECK(detect(wide, params, profile).points_in_range == scene.cloud.size());

  const auto head = dethead::render_head_output(scene.boxes, profile.head_geometry(), profile.classes());
  DetectOptions opt;
  opt.head_override = &head;
  const auto inj = detect(scene.cloud, params, profile, opt);
  CHECK(inj.detections.size() == scene.boxes.size());
  CHECK(inj.points_in_range == a.points_in_range);
  CHECK(inj.pillars == a.pillars);
  for (const auto& d : inj.detections) {
    const auto j = detection_to_json(d);
    const auto back = detection_from_json(j);
    CHECK(back.box == d.box);
    CHECK(back.final_score == d.final_score);
  }
}

TEST_CASE("train step") {
  const auto profile = tiny_profile();
  const auto geo = profile.head_geometry();
  const auto scene = tiny_scene(6, 3);
  auto head = dethead::HeadOutput::zeros(profile.classes(), geo.h, geo.w);
  for (double& v : head.heatmap) v = 0.3;
  const auto rep = train_step(head, scene.boxes, profile, 1e-3);
  CHECK(rep.objects == scene.boxes.size());
  CHECK(rep.total > 0.0);
  CHECK(rep.total == doctest::Approx(losses::total_loss(rep.parts, profile.loss_weights)));
  CHECK(rep.total_after < rep.total);

  const auto perfect = dethead::render_head_output(scene.boxes, geo, profile.classes(), 1.0 - 1e-4);
  const auto p = train_step(perfect, scene.boxes, profile, 0.0);
  CHECK(p.parts.reg < 1e-9);
  CHECK(p.parts.iou < 1e-9);
  CHECK(p.parts.diou < 1e-9);
  CHECK_THROWS_AS(train_step(head, scene.boxes, profile, -1.0), Error);
}

TEST_CASE("bench rows") {
  const auto profile = tiny_profile();
  const auto params = fuse_model(init_model(config_from_profile(profile), repnet::InitKind::kNeutral, 0));
  const auto rows = bench(params, profile, 500, 3, 1);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].stage == "encode");
  CHECK(rows[3].stage == "post");
  for (const auto& r : rows) {
    CHECK(r.p50 >= 0.0);
    CHECK(r.p90 >= r.p50);
  }
}

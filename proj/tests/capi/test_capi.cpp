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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pillardet/pillardet.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Owns a string returned by the library.
struct Str {
  char* p = nullptr;
  ~Str() { pd_string_free(p); }
  std::string s() const { return p ? p : ""; }
};

fs::path scratch() {
  const fs::path dir = fs::temp_directory_path() / "pillardet_test_capi";
  fs::create_directories(dir);
  return dir;
}

pd_profile* tiny_profile() {
  const auto cfg = scratch() / "tiny.json";
  std::ofstream(cfg) << R"({"range": [-9.6, 9.6, -9.6, 9.6, -2, 4],
    "backbone": {"stage_blocks": [1, 1, 1, 1], "stage_channels": [8, 16, 32, 64], "in_channels": 8},
    "neck_channels": 16})";
  pd_profile* p = nullptr;
  REQUIRE(pd_profile_load("waymo", cfg.string().c_str(), &p) == PD_OK);
  return p;
}

}  // namespace

TEST_CASE("status names and errors") {
  CHECK(std::string(pd_version()).size() > 0);
  CHECK(std::string(pd_status_name(PD_ERR_PARSE)) == "parse error");
  pd_profile* p = nullptr;
  CHECK(pd_profile_load("nope", nullptr, &p) == PD_ERR_INVALID_ARGUMENT);
  CHECK(p == nullptr);
  CHECK(std::string(pd_last_error()).find("nope") != std::string::npos);
  CHECK(pd_profile_load(nullptr, nullptr, &p) == PD_ERR_INVALID_ARGUMENT);
  pd_cloud* c = nullptr;
  CHECK(pd_cloud_load((scratch() / "absent.bin").string().c_str(), &c) == PD_ERR_IO);
  pd_profile_free(nullptr);
  pd_cloud_free(nullptr);
  pd_model_free(nullptr);
}

TEST_CASE("profile json") {
  pd_profile* p = nullptr;
  REQUIRE(pd_profile_load("nuscenes", nullptr, &p) == PD_OK);
  Str s;
  REQUIRE(pd_profile_to_json(p, &s.p) == PD_OK);
  const auto j = json::parse(s.s());
  CHECK(j["pillar_size"][0] == 0.15);
  CHECK(j["class_agnostic"] == true);
  pd_profile_free(p);

  const auto bad = scratch() / "bad.json";
  std::ofstream(bad) << R"({"colour": 1})";
  CHECK(pd_profile_load("waymo", bad.string().c_str(), &p) == PD_ERR_PARSE);
}

TEST_CASE("clouds and pillarize") {
  pd_profile* prof = tiny_profile();
  const float pts[] = {0.5f, 0.3f, 0.f, 0.1f, 0.f, 0.55f, 0.35f, 1.f, 0.2f, 0.f,
                       -3.f, 2.f, 0.f, 0.3f, 0.f};
  pd_cloud* c = nullptr;
  REQUIRE(pd_cloud_from_points(pts, 3, &c) == PD_OK);
  CHECK(pd_cloud_size(c) == 3);
  const auto path = (scratch() / "c.bin").string();
  REQUIRE(pd_cloud_save(c, path.c_str()) == PD_OK);
  pd_cloud* back = nullptr;
  REQUIRE(pd_cloud_load(path.c_str(), &back) == PD_OK);
  CHECK(pd_cloud_size(back) == 3);

  Str s;
  REQUIRE(pd_pillarize(back, prof, 1, &s.p) == PD_OK);
  const auto j = json::parse(s.s());
  CHECK(j["points"] == 3);
  CHECK(j["pillars"] == 2);
  CHECK(j["grid"][0] == 96);

  pd_cloud* empty = nullptr;
  REQUIRE(pd_cloud_from_points(nullptr, 0, &empty) == PD_OK);
  Str e;
  REQUIRE(pd_pillarize(empty, prof, 0, &e.p) == PD_OK);
  CHECK(json::parse(e.s())["pillars"] == 0);

  const float far[] = {0.f, 0.f, 0.f, 0.f, 0.f, 40.f, 0.f, 0.f, 0.f, 0.f};
  pd_cloud* out = nullptr;
  REQUIRE(pd_cloud_from_points(far, 2, &out) == PD_OK);
  Str o;
  CHECK(pd_pillarize(out, prof, 0, &o.p) == PD_ERR_OUT_OF_RANGE);
  CHECK(std::string(pd_last_error()).find("point 1") != std::string::npos);

  const float nan[] = {NAN, 0.f, 0.f, 0.f, 0.f};
  pd_cloud* bad = nullptr;
  CHECK(pd_cloud_from_points(nan, 1, &bad) != PD_OK);

  for (pd_cloud* x : {c, back, empty, out}) pd_cloud_free(x);
  pd_profile_free(prof);
}

TEST_CASE("models, fusion and detection") {
  pd_profile* prof = tiny_profile();
  pd_model* train = nullptr;
  REQUIRE(pd_model_init(prof, 0, 3, &train) == PD_OK);
  CHECK(pd_model_is_fused(train) == 0);
  pd_model* fused = nullptr;
  double disc = 1.0;
  REQUIRE(pd_model_fuse(train, 2, 1, &fused, &disc) == PD_OK);
  CHECK(pd_model_is_fused(fused) == 1);
  CHECK(disc < 1e-4);
  pd_model* again = nullptr;
  CHECK(pd_model_fuse(fused, 1, 1, &again, &disc) == PD_ERR_INVALID_ARGUMENT);

  const auto ckpt = (scratch() / "m.json").string();
  REQUIRE(pd_model_save(fused, ckpt.c_str()) == PD_OK);
  pd_model* loaded = nullptr;
  REQUIRE(pd_model_load(ckpt.c_str(), &loaded) == PD_OK);

  pd_cloud* cloud = nullptr;
  Str boxes;
  REQUIRE(pd_generate(R"({"range": [-9, 9, -9, 9, -2, 4], "num_objects": 3})", 7, &cloud,
                      &boxes.p) == PD_OK);
  int nboxes = 0;
  {
    std::istringstream in(boxes.s());
    for (std::string line; std::getline(in, line);) nboxes += !line.empty();
  }
  CHECK(nboxes == 3);

  Str d1, d2, rep;
  REQUIRE(pd_detect(cloud, fused, prof, nullptr, &d1.p, &rep.p) == PD_OK);
  REQUIRE(pd_detect(cloud, loaded, prof, nullptr, &d2.p, nullptr) == PD_OK);
  CHECK(d1.s() == d2.s());
  CHECK(json::parse(rep.s())["pillars"].get<int>() > 0);

  Str inj;
  REQUIRE(pd_detect(cloud, fused, prof, boxes.p, &inj.p, nullptr) == PD_OK);
  int ndet = 0;
  std::istringstream in(inj.s());
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    ++ndet;
    const auto j = json::parse(line);
    for (const char* k : {"cx", "cy", "cz", "l", "w", "h", "yaw", "class", "cls_score",
                          "iou_score", "final_score"})
      CHECK(j.contains(k));
  }
  CHECK(ndet == 3);

  Str enc;
  REQUIRE(pd_encode(cloud, fused, prof, &enc.p) == PD_OK);
  CHECK(json::parse(enc.s().substr(0, enc.s().find('\n')))["feature"].size() == 8);

  Str tr;
  REQUIRE(pd_train_step(cloud, train, prof, boxes.p, 1e-3, &tr.p) == PD_OK);
  CHECK(json::parse(tr.s())["objects"] == 3);

  Str bench;
  REQUIRE(pd_bench(fused, prof, 300, 2, 1, &bench.p) == PD_OK);
  CHECK(json::parse(bench.s()).size() == 4);

  for (pd_model* m : {train, fused, loaded}) pd_model_free(m);
  pd_cloud_free(cloud);
  pd_profile_free(prof);
}

TEST_CASE("flops") {
  pd_profile* prof = nullptr;
  REQUIRE(pd_profile_load("waymo", nullptr, &prof) == PD_OK);
  const int ratios[] = {6, 6, 3, 1, 3, 4, 6, 3};
  Str s;
  REQUIRE(pd_flops(prof, ratios, 2, 0, 0, &s.p) == PD_OK);
  const auto j = json::parse(s.s());
  CHECK(j["in_h"] == 752);
  CHECK(j["rows"][0]["total"] == j["rows"][1]["total"]);
  CHECK(j["rows"][0]["params"] == 12060352);
  CHECK(j["rows"][1]["params"] == 24228160);
  const int bad[] = {1, -1, 0, 0};
  Str b;
  CHECK(pd_flops(prof, bad, 1, 0, 0, &b.p) == PD_ERR_INVALID_ARGUMENT);
  pd_profile_free(prof);
}

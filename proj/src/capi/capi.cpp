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

#include "pillardet/pillardet.h"

#include <cstdlib>
#include <cstring>
#include <map>
#include <new>
#include <sstream>
#include <string>

#include <json.hpp>

#include "model/model.hpp"
#include "repnet/flops.hpp"

struct pd_profile {
  pillardet::model::Profile p;
};

struct pd_cloud {
  pillardet::pointcloud::PointCloud c;
};

struct pd_model {
  pillardet::model::ModelParams m;
};

namespace {

using nlohmann::json;
using pillardet::Error;
using pillardet::ErrorCode;

thread_local std::string g_last_error;

pd_status set_error(pd_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename Fn>
pd_status guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return PD_OK;
  } catch (const Error& e) {
    return set_error(static_cast<pd_status>(static_cast<int>(e.code())), e.what());
  } catch (const json::exception& e) {
    return set_error(PD_ERR_PARSE, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(PD_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(PD_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(PD_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* what) {
  PD_CHECK(p != nullptr, ErrorCode::kInvalidArgument, what, " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

std::vector<pillardet::Box3D> parse_boxes(const char* jsonl) {
  std::vector<pillardet::Box3D> boxes;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      boxes.push_back(pillardet::model::box_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      pillardet::fail(ErrorCode::kParse, "box line ", lineno, ": ", e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "box line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return boxes;
}

std::string to_jsonl(const std::vector<json>& rows) {
  std::string s;
  for (const auto& r : rows) {
    s += r.dump();
    s += '\n';
  }
  return s;
}

}  // namespace

extern "C" {

const char* pd_version(void) { return "1.0.0"; }

const char* pd_last_error(void) { return g_last_error.c_str(); }

const char* pd_status_name(pd_status status) {
  switch (status) {
    case PD_OK: return "ok";
    case PD_ERR_INVALID_ARGUMENT: return "invalid argument";
    case PD_ERR_IO: return "io error";
    case PD_ERR_PARSE: return "parse error";
    case PD_ERR_OUT_OF_RANGE: return "out of range";
    case PD_ERR_SHAPE_MISMATCH: return "shape mismatch";
    case PD_ERR_INVARIANT: return "invariant violation";
    case PD_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void pd_string_free(char* s) { std::free(s); }

pd_status pd_profile_load(const char* name, const char* config_path, pd_profile** out) {
  return guard([&] {
    require(name, "name");
    require(out, "out");
    auto p = pillardet::model::load_profile(name, config_path ? config_path : "");
    *out = new pd_profile{std::move(p)};
  });
}

pd_status pd_profile_to_json(const pd_profile* profile, char** out_json) {
  return guard([&] {
    require(profile, "profile");
    require(out_json, "out_json");
    *out_json = dup_string(pillardet::model::profile_to_json(profile->p).dump());
  });
}

void pd_profile_free(pd_profile* profile) { delete profile; }

pd_status pd_cloud_load(const char* path, pd_cloud** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new pd_cloud{pillardet::pointcloud::load_cloud(path)};
  });
}

pd_status pd_cloud_save(const pd_cloud* cloud, const char* path) {
  return guard([&] {
    require(cloud, "cloud");
    require(path, "path");
    pillardet::pointcloud::save_cloud(cloud->c, path);
  });
}

pd_status pd_cloud_from_points(const float* xyzrt, size_t count, pd_cloud** out) {
  return guard([&] {
    require(out, "out");
    if (count > 0) require(xyzrt, "xyzrt");
    auto* c = new pd_cloud{};
    c->c.points.resize(count);
    for (size_t i = 0; i < count; ++i) {
      const float* r = xyzrt + 5 * i;
      c->c.points[i] = {r[0], r[1], r[2], r[3], r[4]};
      if (!c->c.points[i].finite()) {
        delete c;
        pillardet::fail(ErrorCode::kInvalidArgument, "point ", i, " is not finite");
      }
    }
    *out = c;
  });
}

size_t pd_cloud_size(const pd_cloud* cloud) { return cloud ? cloud->c.size() : 0; }

void pd_cloud_free(pd_cloud* cloud) { delete cloud; }

pd_status pd_generate(const char* spec_json, uint64_t seed, pd_cloud** out_cloud,
                      char** out_boxes_jsonl) {
  return guard([&] {
    require(out_cloud, "out_cloud");
    require(out_boxes_jsonl, "out_boxes_jsonl");
    pillardet::pointcloud::SceneSpec spec;
    const json j = (spec_json && *spec_json) ? json::parse(spec_json) : json::object();
    PD_CHECK(j.is_object(), ErrorCode::kParse, "scene spec must be a JSON object");
    for (const auto& [k, v] : j.items()) {
      if (k == "range") {
        const auto r = v.get<std::vector<double>>();
        PD_CHECK(r.size() == 6, ErrorCode::kParse, "range needs six values");
        spec.range = {r[0], r[1], r[2], r[3], r[4], r[5]};
      } else if (k == "num_objects") {
        spec.num_objects = v.get<int>();
      } else if (k == "num_classes") {
        spec.num_classes = v.get<int>();
      } else if (k == "points_per_object") {
        spec.points_per_object = v.get<int>();
      } else if (k == "background_points") {
        spec.background_points = v.get<int>();
      } else if (k == "noise") {
        spec.noise = v.get<double>();
      } else if (k == "ground_z") {
        spec.ground_z = v.get<double>();
      } else if (k == "planted") {
        for (const auto& b : v) spec.planted.push_back(pillardet::model::box_from_json(b));
      } else {
        pillardet::fail(ErrorCode::kParse, "unknown key '", k, "' in scene spec");
      }
    }
    auto scene = pillardet::pointcloud::generate_scene(spec, seed);
    std::vector<json> rows;
    for (const auto& b : scene.boxes) rows.push_back(pillardet::model::box_to_json(b));
    *out_boxes_jsonl = dup_string(to_jsonl(rows));
    *out_cloud = new pd_cloud{std::move(scene.cloud)};
  });
}

pd_status pd_model_init(const pd_profile* profile, int init_kind, uint64_t seed, pd_model** out) {
  return guard([&] {
    require(profile, "profile");
    require(out, "out");
    PD_CHECK(init_kind == 0 || init_kind == 1, ErrorCode::kInvalidArgument,
             "init_kind must be 0 (random) or 1 (neutral)");
    const auto kind = init_kind == 0 ? pillardet::repnet::InitKind::kRandom
                                     : pillardet::repnet::InitKind::kNeutral;
    *out = new pd_model{
        pillardet::model::init_model(pillardet::model::config_from_profile(profile->p), kind, seed)};
  });
}

pd_status pd_model_load(const char* manifest_path, pd_model** out) {
  return guard([&] {
    require(manifest_path, "manifest_path");
    require(out, "out");
    *out = new pd_model{pillardet::model::load_checkpoint(manifest_path)};
  });
}

pd_status pd_model_save(const pd_model* model, const char* manifest_path) {
  return guard([&] {
    require(model, "model");
    require(manifest_path, "manifest_path");
    pillardet::model::save_checkpoint(model->m, manifest_path);
  });
}

int pd_model_is_fused(const pd_model* model) { return model && model->m.fused() ? 1 : 0; }

void pd_model_free(pd_model* model) { delete model; }

pd_status pd_model_fuse(const pd_model* train, int probes, uint64_t seed, pd_model** out_fused,
                        double* out_max_discrepancy) {
  return guard([&] {
    require(train, "train");
    require(out_fused, "out_fused");
    PD_CHECK(!train->m.fused(), ErrorCode::kInvalidArgument, "model is already fused");
    auto fused = pillardet::model::fuse_model(train->m);
    const auto rep = pillardet::model::probe_fusion(train->m, fused, probes, seed);
    if (out_max_discrepancy) *out_max_discrepancy = rep.max_discrepancy;
    *out_fused = new pd_model{std::move(fused)};
  });
}

pd_status pd_pillarize(const pd_cloud* cloud, const pd_profile* profile, int with_records,
                       char** out_json) {
  return guard([&] {
    require(cloud, "cloud");
    require(profile, "profile");
    require(out_json, "out_json");
    const auto& grid = profile->p.grid;
    const auto pillars = pillardet::pillargrid::assign_pillars(cloud->c, grid);
    // Occupancy buckets [1,1], [2,2], [3,4], [5,8], ... by points per pillar.
    std::map<std::size_t, std::size_t> buckets;
    json records = json::array();
    for (const auto& p : pillars) {
      std::size_t hi = 1;
      while (hi < p.point_indices.size()) hi *= 2;
      ++buckets[hi];
      if (with_records) records.push_back({p.ix, p.iy, p.point_indices.size()});
    }
    json hist = json::array();
    for (const auto& [hi, count] : buckets) {
      hist.push_back({{"min", hi == 1 ? 1 : hi / 2 + 1}, {"max", hi}, {"count", count}});
    }
    json out{{"points", cloud->c.size()},
             {"pillars", pillars.size()},
             {"grid", {grid.nx(), grid.ny()}},
             {"histogram", hist}};
    if (with_records) out["records"] = records;
    *out_json = dup_string(out.dump());
  });
}

pd_status pd_encode(const pd_cloud* cloud, const pd_model* model, const pd_profile* profile,
                    char** out_jsonl) {
  return guard([&] {
    require(cloud, "cloud");
    require(model, "model");
    require(profile, "profile");
    require(out_jsonl, "out_jsonl");
    const auto enc = pillardet::model::encode_cloud(cloud->c, model->m.mape, profile->p.grid);
    std::vector<json> rows;
    for (std::size_t i = 0; i < enc.pillars.size(); ++i) {
      rows.push_back({{"ix", enc.pillars[i].ix},
                      {"iy", enc.pillars[i].iy},
                      {"points", enc.pillars[i].point_indices.size()},
                      {"feature", enc.features[i]}});
    }
    *out_jsonl = dup_string(to_jsonl(rows));
  });
}

pd_status pd_flops(const pd_profile* profile, const int* ratios, size_t count, int in_h, int in_w,
                   char** out_json) {
  return guard([&] {
    require(profile, "profile");
    require(out_json, "out_json");
    if (count > 0) require(ratios, "ratios");
    namespace rn = pillardet::repnet;
    const int h = in_h > 0 ? in_h : profile->p.grid.ny();
    const int w = in_w > 0 ? in_w : profile->p.grid.nx();
    json rows = json::array();
    for (size_t i = 0; i < count; ++i) {
      rn::BackboneConfig cfg = profile->p.backbone;
      for (int s = 0; s < rn::kStages; ++s) cfg.stage_blocks[s] = ratios[4 * i + s];
      const auto rep = rn::count_macs(cfg, h, w);
      json stages = json::array();
      for (const auto& st : rep.stages) {
        stages.push_back({{"blocks", st.blocks},
                          {"channels", st.channels},
                          {"h", st.h},
                          {"w", st.w},
                          {"transition", st.transition},
                          {"per_block", st.per_block},
                          {"total", st.total}});
      }
      rows.push_back({{"ratios", cfg.stage_blocks},
                      {"stem", rep.stem},
                      {"stages", stages},
                      {"total", rep.total},
                      {"train_total", rn::count_train_macs(cfg, h, w).total},
                      {"params", rn::count_params(cfg)}});
    }
    const auto base = rn::count_macs(profile->p.backbone, h, w);
    json slope = json::array();
    for (const auto& st : base.stages) slope.push_back(st.per_block);
    *out_json = dup_string(
        json{{"in_h", h}, {"in_w", w}, {"per_block", slope}, {"rows", rows}}.dump());
  });
}

pd_status pd_detect(const pd_cloud* cloud, const pd_model* model, const pd_profile* profile,
                    const char* inject_boxes_jsonl, char** out_jsonl, char** out_report_json) {
  return guard([&] {
    require(cloud, "cloud");
    require(model, "model");
    require(profile, "profile");
    require(out_jsonl, "out_jsonl");
    pillardet::model::DetectOptions opt;
    pillardet::dethead::HeadOutput injected;
    if (inject_boxes_jsonl) {
      const auto boxes = parse_boxes(inject_boxes_jsonl);
      injected = pillardet::dethead::render_head_output(boxes, profile->p.head_geometry(),
                                                        profile->p.classes());
      opt.head_override = &injected;
    }
    const auto res = pillardet::model::detect(cloud->c, model->m, profile->p, opt);
    std::vector<json> rows;
    for (const auto& d : res.detections) rows.push_back(pillardet::model::detection_to_json(d));
    *out_jsonl = dup_string(to_jsonl(rows));
    if (out_report_json) {
      const json rep{{"detections", res.detections.size()},
                     {"points_in_range", res.points_in_range},
                     {"pillars", res.pillars},
                     {"injected", inject_boxes_jsonl != nullptr},
                     {"times_ms",
                      {{"encode", res.times.encode_ms},
                       {"backbone", res.times.backbone_ms},
                       {"head", res.times.head_ms},
                       {"post", res.times.post_ms}}}};
      *out_report_json = dup_string(rep.dump());
    }
  });
}

pd_status pd_bench(const pd_model* model, const pd_profile* profile, int points, int repeats,
                   uint64_t seed, char** out_json) {
  return guard([&] {
    require(model, "model");
    require(profile, "profile");
    require(out_json, "out_json");
    const auto rows = pillardet::model::bench(model->m, profile->p, points, repeats, seed);
    json out = json::array();
    for (const auto& r : rows) {
      out.push_back({{"stage", r.stage}, {"p50", r.p50}, {"p90", r.p90}, {"mean", r.mean}});
    }
    *out_json = dup_string(out.dump());
  });
}

pd_status pd_train_step(const pd_cloud* cloud, const pd_model* model, const pd_profile* profile,
                        const char* boxes_jsonl, double lr, char** out_json) {
  return guard([&] {
    require(cloud, "cloud");
    require(model, "model");
    require(profile, "profile");
    require(boxes_jsonl, "boxes_jsonl");
    require(out_json, "out_json");
    const auto boxes = parse_boxes(boxes_jsonl);
    const auto head = pillardet::model::run_network(cloud->c, model->m, profile->p);
    const auto rep = pillardet::model::train_step(head, boxes, profile->p, lr);
    auto parts = [](const pillardet::losses::LossParts& p) {
      return json{{"cls", p.cls}, {"iou", p.iou}, {"diou", p.diou}, {"reg", p.reg}};
    };
    const auto& w = profile->p.loss_weights;
    *out_json = dup_string(json{{"objects", rep.objects},
                                {"weights", {w.cls, w.iou, w.reg}},
                                {"lr", rep.lr},
                                {"before", parts(rep.parts)},
                                {"total", rep.total},
                                {"after", parts(rep.parts_after)},
                                {"total_after", rep.total_after}}
                               .dump());
  });
}

}  // extern "C"

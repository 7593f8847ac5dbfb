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

#include "model/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace pillardet::model {

using nlohmann::json;

void ModelConfig::validate() const {
  backbone.validate();
  PD_CHECK(mape_layers >= 1, ErrorCode::kInvalidArgument, "mape_layers must be >= 1");
  PD_CHECK(neck_channels >= 1, ErrorCode::kInvalidArgument, "neck_channels must be >= 1");
  PD_CHECK(classes >= 1, ErrorCode::kInvalidArgument, "classes must be >= 1");
}

ModelConfig config_from_profile(const Profile& p) {
  ModelConfig c;
  c.backbone = p.backbone;
  c.mape_layers = p.mape_layers;
  c.neck_channels = p.neck_channels;
  c.classes = p.classes();
  return c;
}

void ModelParams::validate() const {
  config.validate();
  mape.validate();
  PD_CHECK(mape.width() == config.mape_width() &&
               static_cast<int>(mape.encode.size()) == config.mape_layers,
           ErrorCode::kShapeMismatch, "MAPE parameters do not match the model config");
  PD_CHECK(backbone.config == config.backbone, ErrorCode::kShapeMismatch,
           "backbone parameters do not match the model config");
  backbone.validate();
  neck.validate();
  PD_CHECK(neck.proj_fine.c_in == config.backbone.stage_channels[2] &&
               neck.proj_coarse.c_in == config.backbone.stage_channels[3] &&
               neck.channels() == config.neck_channels,
           ErrorCode::kShapeMismatch, "neck parameters do not match the model config");
  head.validate();
  PD_CHECK(head.shared.c_in == config.neck_channels && head.classes() == config.classes,
           ErrorCode::kShapeMismatch, "head parameters do not match the model config");
}

ModelParams init_model(const ModelConfig& cfg, repnet::InitKind kind, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.config = cfg;
  p.mape = mape::random_params(cfg.mape_width(), cfg.mape_layers, rng);
  p.backbone = repnet::init_backbone(cfg.backbone, kind, rng);
  p.neck = repnet::init_neck(cfg.backbone.stage_channels[2], cfg.backbone.stage_channels[3],
                             cfg.neck_channels, kind, rng);
  p.head = dethead::init_head(cfg.neck_channels, cfg.classes, kind == repnet::InitKind::kRandom,
                              rng);
  return p;
}

ModelParams fuse_model(const ModelParams& train) {
  ModelParams out = train;
  out.backbone = repnet::fuse_backbone(train.backbone);
  return out;
}

FuseReport probe_fusion(const ModelParams& train, const ModelParams& fused, int probes,
                        std::uint64_t seed, int h, int w) {
  PD_CHECK(probes >= 1 && h >= 1 && w >= 1, ErrorCode::kInvalidArgument,
           "fusion probe needs probes >= 1 and a positive canvas");
  PD_CHECK(train.config == fused.config, ErrorCode::kShapeMismatch,
           "fusion probe compares models of different architecture");
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.f, 1.f);
  FuseReport rep;
  rep.probes = probes;
  for (int k = 0; k < probes; ++k) {
    repnet::DenseTensor x(1, train.config.backbone.in_channels, h, w);
    for (float& v : x.values()) v = nd(rng);
    const auto a = repnet::backbone_forward(x, fused.backbone);
    const auto b = repnet::backbone_forward(x, train.backbone);
    for (int s = 0; s < repnet::kStages; ++s) {
      rep.max_discrepancy =
          std::max(rep.max_discrepancy, repnet::max_relative_discrepancy(a.stages[s], b.stages[s]));
    }
  }
  return rep;
}

EncodedPillars encode_cloud(const pointcloud::PointCloud& cloud, const mape::MapeParams& mape,
                            const pillargrid::GridConfig& grid) {
  EncodedPillars e;
  e.pillars = pillargrid::assign_pillars(cloud, grid);
  e.features.reserve(e.pillars.size());
  for (const auto& pl : e.pillars) {
    const auto aug = pillargrid::augment_points(cloud, pl, grid);
    e.features.push_back(mape::mape_encode(aug, mape).f);
  }
  return e;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Runs `fn`, prefixing any library error with the stage name.
template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(name) + ": " + e.what());
  }
}

void check_compatible(const ModelParams& params, const Profile& profile) {
  PD_CHECK(params.config.classes == profile.classes(), ErrorCode::kInvalidArgument,
           "checkpoint predicts ", params.config.classes, " classes, profile '", profile.name,
           "' has ", profile.classes());
}

}  // namespace

dethead::HeadOutput run_network(const pointcloud::PointCloud& cloud, const ModelParams& params,
                                const Profile& profile) {
  check_compatible(params, profile);
  const auto cropped = pointcloud::crop_to_range(cloud, profile.grid.range);
  const auto enc = stage("encode", [&] { return encode_cloud(cropped, params.mape, profile.grid); });
  const auto canvas = stage("scatter", [&] {
    return pillargrid::scatter(enc.pillars, enc.features, profile.grid, params.mape.width());
  });
  const auto neck = stage("backbone", [&] {
    const auto feats = repnet::backbone_forward(canvas.features, params.backbone);
    return repnet::neck_fuse(feats.stages[2], feats.stages[3], params.neck);
  });
  return stage("head", [&] { return dethead::head_forward(neck, params.head); });
}

DetectResult detect(const pointcloud::PointCloud& cloud, const ModelParams& params,
                    const Profile& profile, const DetectOptions& opt) {
  profile.validate();
  check_compatible(params, profile);
  DetectResult res;
  const auto geo = profile.head_geometry();
  dethead::HeadOutput computed;
  const dethead::HeadOutput* head = opt.head_override;

  if (head == nullptr) {
    auto t0 = Clock::now();
    const auto cropped = pointcloud::crop_to_range(cloud, profile.grid.range);
    res.points_in_range = cropped.size();
    const auto enc =
        stage("encode", [&] { return encode_cloud(cropped, params.mape, profile.grid); });
    res.pillars = enc.pillars.size();
    if (enc.pillars.empty()) {
      res.times.encode_ms = ms_since(t0);
      return res;
    }
    const auto canvas = stage("encode", [&] {
      return pillargrid::scatter(enc.pillars, enc.features, profile.grid, params.mape.width());
    });
    res.times.encode_ms = ms_since(t0);

    t0 = Clock::now();
    const auto neck = stage("backbone", [&] {
      const auto feats = repnet::backbone_forward(canvas.features, params.backbone);
      return repnet::neck_fuse(feats.stages[2], feats.stages[3], params.neck);
    });
    res.times.backbone_ms = ms_since(t0);

    t0 = Clock::now();
    computed = stage("head", [&] { return dethead::head_forward(neck, params.head); });
    res.times.head_ms = ms_since(t0);
    head = &computed;
  } else {
    // The network is bypassed, but the counts still describe the input.
    const auto cropped = pointcloud::crop_to_range(cloud, profile.grid.range);
    res.points_in_range = cropped.size();
    res.pillars = stage("encode", [&] {
      return pillargrid::assign_pillars(cropped, profile.grid).size();
    });
  }

  const auto t0 = Clock::now();
  res.detections = stage("post", [&] {
    const auto raw = dethead::decode(*head, geo, profile.decode_options());
    return dethead::nms(raw, profile.nms_options());
  });
  res.times.post_ms = ms_since(t0);
  return res;
}

namespace {

struct LossEval {
  losses::LossParts parts;
  double total = 0.0;
  // Gradients with respect to the head output maps (same layout).
  std::vector<double> g_heat, g_reg, g_iou;  // g_reg is (objects, 8)
};

std::array<double, losses::kRegChannels> reg_at(const dethead::HeadOutput& h, std::size_t cell) {
  const std::size_t p = h.plane();
  return {h.offset[cell], h.offset[p + cell], h.z[cell],       h.size[cell],
          h.size[p + cell], h.size[2 * p + cell], h.yaw[cell], h.yaw[p + cell]};
}

Box3D box_from_reg(const std::array<double, losses::kRegChannels>& r, int x, int y,
                   const dethead::HeadGeometry& geo, int cls) {
  Box3D b;
  b.cx = geo.x_min + (x + 0.5 + r[0]) * geo.cell_x;
  b.cy = geo.y_min + (y + 0.5 + r[1]) * geo.cell_y;
  b.cz = r[2];
  b.l = std::exp(r[3]);
  b.w = std::exp(r[4]);
  b.h = std::exp(r[5]);
  b.yaw = std::atan2(r[6], r[7]);
  b.class_id = cls;
  return b;
}

LossEval evaluate_losses(const dethead::HeadOutput& head, const losses::Targets& t,
                         const dethead::HeadGeometry& geo, const losses::LossWeights& w) {
  LossEval ev;
  losses::Heatmap pred{head.classes, head.h, head.w, head.heatmap};
  for (double& v : pred.values) v = std::clamp(v, 1e-4, 1.0 - 1e-4);
  auto focal = losses::focal_loss(pred, t.heatmap);
  ev.parts.cls = focal.value;
  ev.g_heat = std::move(focal.grad);

  const std::size_t n = t.objects.size();
  ev.g_reg.assign(n * losses::kRegChannels, 0.0);
  ev.g_iou.assign(n, 0.0);
  if (n > 0) {
    std::vector<double> pr, tg, ip, it;
    std::vector<Box3D> boxes;
    for (const auto& o : t.objects) {
      const auto r = reg_at(head, head.cell(o.cell_y, o.cell_x));
      pr.insert(pr.end(), r.begin(), r.end());
      tg.insert(tg.end(), o.reg.begin(), o.reg.end());
      boxes.push_back(box_from_reg(r, o.cell_x, o.cell_y, geo, o.box.class_id));
      ip.push_back(std::clamp(head.iou[head.cell(o.cell_y, o.cell_x)], -1.0, 1.0));
      it.push_back(dethead::iou_3d(boxes.back(), o.box));
    }
    const auto l1 = losses::reg_l1_loss(pr, tg, losses::kRegChannels);
    const auto il = losses::iou_branch_loss(ip, it);
    ev.parts.reg = l1.value;
    ev.parts.iou = il.value;
    ev.g_iou = il.grad;
    for (std::size_t k = 0; k < n; ++k) {
      const auto d = losses::diou_loss(boxes[k], t.objects[k].box);
      ev.parts.diou += d.value / static_cast<double>(n);
      // Chain rule from box parameters back to the regression channels.
      const double s = pr[k * 8 + 6], c = pr[k * 8 + 7];
      const double r2 = std::max(s * s + c * c, 1e-12);
      std::array<double, 8> g{};
      g[0] = d.grad[0] * geo.cell_x;
      g[1] = d.grad[1] * geo.cell_y;
      g[3] = d.grad[3] * boxes[k].l;
      g[4] = d.grad[4] * boxes[k].w;
      g[6] = d.grad[6] * c / r2;
      g[7] = -d.grad[6] * s / r2;
      for (int ch = 0; ch < 8; ++ch) {
        ev.g_reg[k * 8 + ch] = w.reg * (l1.grad[k * 8 + ch] + g[ch] / static_cast<double>(n));
      }
    }
  }
  for (double& g : ev.g_heat) g *= w.cls;
  for (double& g : ev.g_iou) g *= w.iou;
  ev.total = losses::total_loss(ev.parts, w);
  return ev;
}

}  // namespace

TrainStepReport train_step(const dethead::HeadOutput& head, std::span<const Box3D> boxes,
                           const Profile& profile, double lr) {
  profile.validate();
  head.validate();
  PD_CHECK(lr >= 0.0 && std::isfinite(lr), ErrorCode::kInvalidArgument,
           "learning rate must be finite and non-negative");
  const auto geo = profile.head_geometry();
  PD_CHECK(head.h == geo.h && head.w == geo.w && head.classes == profile.classes(),
           ErrorCode::kShapeMismatch, "head output does not match the profile geometry");
  const auto targets = losses::render_gaussian_targets(boxes, geo, profile.classes());
  const auto before = evaluate_losses(head, targets, geo, profile.loss_weights);

  dethead::HeadOutput next = head;
  for (std::size_t i = 0; i < next.heatmap.size(); ++i) {
    next.heatmap[i] = std::clamp(next.heatmap[i] - lr * before.g_heat[i], 1e-4, 1.0 - 1e-4);
  }
  const std::size_t p = next.plane();
  for (std::size_t k = 0; k < targets.objects.size(); ++k) {
    const auto& o = targets.objects[k];
    const std::size_t c = next.cell(o.cell_y, o.cell_x);
    double* slots[8] = {&next.offset[c],       &next.offset[p + c], &next.z[c],
                        &next.size[c],         &next.size[p + c],   &next.size[2 * p + c],
                        &next.yaw[c],          &next.yaw[p + c]};
    for (int ch = 0; ch < 8; ++ch) *slots[ch] -= lr * before.g_reg[k * 8 + ch];
    next.iou[c] = std::clamp(next.iou[c] - lr * before.g_iou[k], -1.0, 1.0);
  }
  const auto after = evaluate_losses(next, targets, geo, profile.loss_weights);

  TrainStepReport rep;
  rep.parts = before.parts;
  rep.total = before.total;
  rep.objects = targets.objects.size();
  rep.lr = lr;
  rep.parts_after = after.parts;
  rep.total_after = after.total;
  return rep;
}

std::vector<BenchRow> bench(const ModelParams& params, const Profile& profile, int points,
                            int repeats, std::uint64_t seed) {
  PD_CHECK(points >= 0 && repeats >= 1, ErrorCode::kInvalidArgument,
           "bench needs points >= 0 and repeats >= 1");
  const auto& r = profile.grid.range;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(r.x_min, r.x_max), uy(r.y_min, r.y_max),
      uz(r.z_min, r.z_max), ur(0.0, 1.0);
  pointcloud::PointCloud cloud;
  cloud.points.reserve(points);
  for (int i = 0; i < points; ++i) {
    pointcloud::Point pt{static_cast<float>(ux(rng)), static_cast<float>(uy(rng)),
                         static_cast<float>(uz(rng)), static_cast<float>(ur(rng)), 0.f};
    cloud.points.push_back(pt);
  }
  std::array<std::vector<double>, 4> samples;
  for (int k = 0; k < repeats; ++k) {
    const auto res = detect(cloud, params, profile);
    samples[0].push_back(res.times.encode_ms);
    samples[1].push_back(res.times.backbone_ms);
    samples[2].push_back(res.times.head_ms);
    samples[3].push_back(res.times.post_ms);
  }
  const char* names[4] = {"encode", "backbone", "head", "post"};
  std::vector<BenchRow> rows;
  for (int s = 0; s < 4; ++s) {
    auto v = samples[s];
    std::sort(v.begin(), v.end());
    auto rank = [&](double q) {
      const auto idx = static_cast<std::size_t>(std::ceil(q * v.size()));
      return v[std::clamp<std::size_t>(idx, 1, v.size()) - 1];
    };
    rows.push_back({names[s], rank(0.5), rank(0.9),
                    std::accumulate(v.begin(), v.end(), 0.0) / v.size()});
  }
  return rows;
}

json box_to_json(const Box3D& b) {
  return json{{"cx", b.cx}, {"cy", b.cy}, {"cz", b.cz},  {"l", b.l},
              {"w", b.w},   {"h", b.h},   {"yaw", b.yaw}, {"class", b.class_id}};
}

Box3D box_from_json(const json& j) {
  Box3D b;
  try {
    b.cx = j.at("cx").get<double>();
    b.cy = j.at("cy").get<double>();
    b.cz = j.at("cz").get<double>();
    b.l = j.at("l").get<double>();
    b.w = j.at("w").get<double>();
    b.h = j.at("h").get<double>();
    b.yaw = j.at("yaw").get<double>();
    b.class_id = j.value("class", 0);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, "box record: ", e.what());
  }
  b.validate();
  return b;
}

json detection_to_json(const dethead::Detection& d) {
  json j = box_to_json(d.box);
  j["cls_score"] = d.cls_score;
  j["iou_score"] = d.iou_score;
  j["final_score"] = d.final_score;
  return j;
}

dethead::Detection detection_from_json(const json& j) {
  dethead::Detection d;
  d.box = box_from_json(j);
  try {
    d.cls_score = j.at("cls_score").get<double>();
    d.iou_score = j.at("iou_score").get<double>();
    d.final_score = j.at("final_score").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, "detection record: ", e.what());
  }
  return d;
}

}  // namespace pillardet::model

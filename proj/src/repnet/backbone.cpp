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

#include "repnet/backbone.hpp"

#include <cmath>

namespace pillardet::repnet {

void BackboneConfig::validate() const {
  PD_CHECK(in_channels > 0, ErrorCode::kInvalidArgument, "backbone input channels must be > 0");
  for (int s = 0; s < kStages; ++s) {
    PD_CHECK(stage_blocks[s] >= 0, ErrorCode::kInvalidArgument, "stage ", s + 1,
             " has a negative block count");
    PD_CHECK(stage_channels[s] > 0, ErrorCode::kInvalidArgument, "stage ", s + 1,
             " has non-positive width");
    if (s > 0) {
      PD_CHECK(stage_channels[s] == 2 * stage_channels[s - 1], ErrorCode::kInvalidArgument,
               "stage widths must double from stage to stage");
    }
  }
}

bool BackboneParams::fused() const {
  if (!stem.fused()) return false;
  for (const auto& st : stages) {
    for (const auto& l : st) {
      if (!l.fused()) return false;
    }
  }
  return true;
}

void BackboneParams::validate() const {
  config.validate();
  PD_CHECK(stem.c_in() == config.in_channels && stem.c_out() == config.stage_channels[0] &&
               stem.stride() == 1,
           ErrorCode::kShapeMismatch, "stem does not map ", config.in_channels, " -> ",
           config.stage_channels[0], " at stride 1");
  for (int s = 0; s < kStages; ++s) {
    const auto& layers = stages[s];
    const std::size_t expected =
        static_cast<std::size_t>(config.stage_blocks[s]) * kLayersPerBlock + (s > 0 ? 1 : 0);
    PD_CHECK(layers.size() == expected, ErrorCode::kShapeMismatch, "stage ", s + 1, " has ",
             layers.size(), " layers, expected ", expected);
    const int c = config.stage_channels[s];
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const bool transition = s > 0 && i == 0;
      const int c_in = transition ? config.stage_channels[s - 1] : c;
      const int stride = transition ? 2 : 1;
      PD_CHECK(layers[i].c_in() == c_in && layers[i].c_out() == c && layers[i].stride() == stride,
               ErrorCode::kShapeMismatch, "stage ", s + 1, " layer ", i,
               " has inconsistent shape");
    }
  }
}

namespace {

RepLayer make_layer(int c_in, int c_out, int stride, InitKind kind, std::mt19937_64& rng) {
  if (kind == InitKind::kNeutral) return RepLayer{neutral_rep_block(c_in, c_out, stride)};
  return RepLayer{random_rep_block(c_in, c_out, stride, rng)};
}

}  // namespace

BackboneParams init_backbone(const BackboneConfig& cfg, InitKind kind, std::mt19937_64& rng) {
  cfg.validate();
  BackboneParams p;
  p.config = cfg;
  p.stem = make_layer(cfg.in_channels, cfg.stage_channels[0], 1, kind, rng);
  for (int s = 0; s < kStages; ++s) {
    const int c = cfg.stage_channels[s];
    if (s > 0) p.stages[s].push_back(make_layer(cfg.stage_channels[s - 1], c, 2, kind, rng));
    for (int b = 0; b < cfg.stage_blocks[s] * kLayersPerBlock; ++b) {
      p.stages[s].push_back(make_layer(c, c, 1, kind, rng));
    }
  }
  return p;
}

BackboneParams fuse_backbone(const BackboneParams& params) {
  params.validate();
  BackboneParams out;
  out.config = params.config;
  out.stem = fuse_layer(params.stem);
  for (int s = 0; s < kStages; ++s) {
    for (const auto& l : params.stages[s]) out.stages[s].push_back(fuse_layer(l));
  }
  return out;
}

BackboneOutputs backbone_forward(const DenseTensor& x, const BackboneParams& params) {
  params.validate();
  PD_CHECK(x.c() == params.config.in_channels, ErrorCode::kShapeMismatch,
           "backbone expects ", params.config.in_channels, " input channels, got shape ",
           x.shape().str());
  BackboneOutputs out;
  DenseTensor cur = rep_layer_forward(x, params.stem);
  for (int s = 0; s < kStages; ++s) {
    for (const auto& l : params.stages[s]) cur = rep_layer_forward(cur, l);
    out.stages[s] = cur;
  }
  return out;
}

void NeckParams::validate() const {
  proj_fine.validate();
  proj_coarse.validate();
  fuse.validate();
  PD_CHECK(proj_fine.stride == 1 && proj_coarse.stride == 1 && fuse.stride == 1,
           ErrorCode::kShapeMismatch, "neck convolutions must have stride 1");
  PD_CHECK(proj_fine.c_out == proj_coarse.c_out && fuse.c_in == 2 * proj_fine.c_out,
           ErrorCode::kShapeMismatch, "neck projection widths do not match the fusion conv");
}

NeckParams init_neck(int c_fine, int c_coarse, int channels, InitKind kind,
                     std::mt19937_64& rng) {
  NeckParams p;
  p.proj_fine = ConvParams::zeros(channels, c_fine, 3, 1);
  p.proj_coarse = ConvParams::zeros(channels, c_coarse, 3, 1);
  p.fuse = ConvParams::zeros(channels, 2 * channels, 3, 1);
  if (kind == InitKind::kRandom) {
    for (ConvParams* c : {&p.proj_fine, &p.proj_coarse, &p.fuse}) {
      std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / (9.0 * c->c_in)));
      for (float& v : c->kernel) v = static_cast<float>(nd(rng));
    }
  }
  return p;
}

DenseTensor neck_fuse(const DenseTensor& fine, const DenseTensor& coarse, const NeckParams& p) {
  p.validate();
  PD_CHECK(fine.n() == coarse.n() && (fine.h() + 1) / 2 == coarse.h() &&
               (fine.w() + 1) / 2 == coarse.w(),
           ErrorCode::kShapeMismatch, "neck needs the coarse map at half the fine resolution, got ",
           fine.shape().str(), " and ", coarse.shape().str());
  DenseTensor up = upsample_nearest2x(coarse);
  if (up.h() != fine.h() || up.w() != fine.w()) {
    DenseTensor cropped(up.n(), up.c(), fine.h(), fine.w());
    for (int n = 0; n < up.n(); ++n) {
      for (int c = 0; c < up.c(); ++c) {
        for (int y = 0; y < fine.h(); ++y) {
          for (int x = 0; x < fine.w(); ++x) cropped.at(n, c, y, x) = up.at(n, c, y, x);
        }
      }
    }
    up = std::move(cropped);
  }
  DenseTensor a = conv2d(fine, p.proj_fine);
  relu_inplace(a);
  DenseTensor b = conv2d(up, p.proj_coarse);
  relu_inplace(b);
  DenseTensor y = conv2d(concat_channels(a, b), p.fuse);
  relu_inplace(y);
  return y;
}

}  // namespace pillardet::repnet

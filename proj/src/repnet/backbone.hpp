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

#include <array>
#include <cstdint>
#include <vector>

#include "repnet/repblock.hpp"

namespace pillardet::repnet {

inline constexpr int kStages = 4;

/// Four-stage single-path backbone.
///
/// Layout (every layer is a rep block, rectifier after the branch sum):
///   stem        in_channels -> C1, stride 1 (doubles as stage 1's entry layer)
///   stage 1     blocks[0] x (two C1 -> C1 layers), canvas resolution
///   stage s>1   transition C(s-1) -> C(s), stride 2, then blocks[s] x
///               (two Cs -> Cs layers)
///
/// A "block" is two 3x3 rep layers, the depth of the residual block it
/// replaces, so block counts read the same as ResNet stage ratios.
struct BackboneConfig {
  std::array<int, kStages> stage_blocks{6, 6, 3, 1};
  std::array<int, kStages> stage_channels{64, 128, 256, 512};
  int in_channels = 64;

  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

inline constexpr int kLayersPerBlock = 2;

struct BackboneParams {
  BackboneConfig config;
  RepLayer stem;
  /// stages[0] holds only block layers; stages[1..3] start with the transition.
  std::array<std::vector<RepLayer>, kStages> stages;

  bool fused() const;
  void validate() const;
};

enum class InitKind { kRandom, kNeutral };

BackboneParams init_backbone(const BackboneConfig& cfg, InitKind kind, std::mt19937_64& rng);

/// Fuses every layer; the result computes the same function.
BackboneParams fuse_backbone(const BackboneParams& params);

struct BackboneOutputs {
  std::array<DenseTensor, kStages> stages;
};

/// Runs the backbone. Stage s output has stage_channels[s] channels and
/// the input resolution divided by 2^s (ceil division per stride-2 layer).
BackboneOutputs backbone_forward(const DenseTensor& x, const BackboneParams& params);

/// Multi-scale fusion of the two coarsest backbone taps: stage 3 (stride 4
/// relative to the pillar canvas) and stage 4 (stride 8).
struct NeckParams {
  ConvParams proj_fine;    // 3x3, C3 -> neck channels
  ConvParams proj_coarse;  // 3x3, C4 -> neck channels, applied after upsampling
  ConvParams fuse;         // 3x3, 2 * neck channels -> neck channels

  int channels() const { return fuse.c_out; }
  void validate() const;
};

NeckParams init_neck(int c_fine, int c_coarse, int channels, InitKind kind, std::mt19937_64& rng);

/// relu(fuse(cat(relu(proj_fine(f_fine)), relu(proj_coarse(up2(f_coarse))))))
/// at the fine resolution. The coarse map must be ceil(fine / 2) in each
/// dimension; the upsampled map is cropped when the fine extent is odd.
DenseTensor neck_fuse(const DenseTensor& fine, const DenseTensor& coarse, const NeckParams& p);

}  // namespace pillardet::repnet

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

#include "repnet/backbone.hpp"

namespace pillardet::repnet {

/// Multiply-accumulate count of one convolution.
std::uint64_t conv_macs(int c_out, int c_in, int k, int h_out, int w_out);

struct StageMacs {
  int blocks = 0;
  int channels = 0;
  int h = 0, w = 0;                 // output resolution of the stage
  std::uint64_t transition = 0;     // stride-2 entry layer (0 for stage 1)
  std::uint64_t per_block = 0;      // one block = kLayersPerBlock 3x3 layers
  std::uint64_t blocks_total = 0;   // per_block * blocks
  std::uint64_t total = 0;          // transition + blocks_total
};

/// MACs of the fused (inference) backbone. The input resolution is an
/// explicit argument so the accounting assumption is visible to callers.
struct MacReport {
  int in_h = 0, in_w = 0;
  std::uint64_t stem = 0;
  std::array<StageMacs, kStages> stages{};
  std::uint64_t total = 0;
};

MacReport count_macs(const BackboneConfig& cfg, int in_h, int in_w);

/// Same layout, counting the unfused 3x3 + 1x1 branch convolutions.
MacReport count_train_macs(const BackboneConfig& cfg, int in_h, int in_w);

/// Fused-form parameters (kernels and biases) of stem, transitions and blocks.
std::uint64_t count_params(const BackboneConfig& cfg);

/// coeff * 2^pow2 * C1^c_pow * (H1*W1)^hw_pow, with C1 the stage-1 width and
/// H1*W1 the stage-1 area. Used to show per-block cost is stage-invariant
/// under the doubling/halving schedule without evaluating at a resolution.
struct Monomial {
  std::int64_t coeff = 0;
  int pow2 = 0;
  int c_pow = 0;
  int hw_pow = 0;

  bool operator==(const Monomial&) const = default;
};

std::array<Monomial, kStages> per_block_macs_symbolic(const BackboneConfig& cfg);

}  // namespace pillardet::repnet

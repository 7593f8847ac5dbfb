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

#include <optional>
#include <random>
#include <variant>

#include "repnet/ops.hpp"

namespace pillardet::repnet {

/// Train-time block: relu(BN(conv3x3 x) + BN(conv1x1 x) + BN(x)). The identity
/// branch exists only when the block keeps both shape and resolution.
struct RepBlockParams {
  ConvParams conv3;
  BNParams bn3;
  ConvParams conv1;
  BNParams bn1;
  std::optional<BNParams> bn_id;

  int c_in() const { return conv3.c_in; }
  int c_out() const { return conv3.c_out; }
  int stride() const { return conv3.stride; }
  void validate() const;
};

/// Branch-sum forward (the rectifier is applied after the summation).
DenseTensor rep_block_forward(const DenseTensor& x, const RepBlockParams& b);

/// Collapses the three branches into one 3x3 convolution with bias.
ConvParams fuse_rep_block(const RepBlockParams& b);

/// All-zero convolutions with neutral BN; with an identity branch the block
/// computes relu(x).
RepBlockParams neutral_rep_block(int c_in, int c_out, int stride);

/// Random weights and statistics of moderate scale (activations stay O(1)).
RepBlockParams random_rep_block(int c_in, int c_out, int stride, std::mt19937_64& rng);

/// One layer of the backbone, either in train (three-branch) or fused form.
struct RepLayer {
  std::variant<RepBlockParams, ConvParams> params;

  bool fused() const { return std::holds_alternative<ConvParams>(params); }
  int c_in() const;
  int c_out() const;
  int stride() const;
};

DenseTensor rep_layer_forward(const DenseTensor& x, const RepLayer& layer);
RepLayer fuse_layer(const RepLayer& layer);

}  // namespace pillardet::repnet

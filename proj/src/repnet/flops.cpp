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

#include "repnet/flops.hpp"

#include <bit>

namespace pillardet::repnet {

std::uint64_t conv_macs(int c_out, int c_in, int k, int h_out, int w_out) {
  return static_cast<std::uint64_t>(c_out) * c_in * k * k * h_out * w_out;
}

namespace {

// Per-layer cost: fused counts one 3x3; train counts 3x3 + 1x1 (the identity
// branch is a BN, not a convolution).
std::uint64_t layer_macs(int c_out, int c_in, int h, int w, bool train) {
  std::uint64_t m = conv_macs(c_out, c_in, 3, h, w);
  if (train) m += conv_macs(c_out, c_in, 1, h, w);
  return m;
}

MacReport count(const BackboneConfig& cfg, int in_h, int in_w, bool train) {
  cfg.validate();
  PD_CHECK(in_h > 0 && in_w > 0, ErrorCode::kInvalidArgument,
           "MAC accounting needs a positive input resolution");
  MacReport r;
  r.in_h = in_h;
  r.in_w = in_w;
  int h = in_h, w = in_w;
  r.stem = layer_macs(cfg.stage_channels[0], cfg.in_channels, h, w, train);
  r.total = r.stem;
  for (int s = 0; s < kStages; ++s) {
    StageMacs& st = r.stages[s];
    const int c = cfg.stage_channels[s];
    if (s > 0) {
      h = conv_out_extent(h, 3, 2, 1);
      w = conv_out_extent(w, 3, 2, 1);
      st.transition = layer_macs(c, cfg.stage_channels[s - 1], h, w, train);
    }
    st.blocks = cfg.stage_blocks[s];
    st.channels = c;
    st.h = h;
    st.w = w;
    st.per_block = kLayersPerBlock * layer_macs(c, c, h, w, train);
    st.blocks_total = st.per_block * static_cast<std::uint64_t>(st.blocks);
    st.total = st.transition + st.blocks_total;
    r.total += st.total;
  }
  return r;
}

}  // namespace

MacReport count_macs(const BackboneConfig& cfg, int in_h, int in_w) {
  return count(cfg, in_h, in_w, false);
}

MacReport count_train_macs(const BackboneConfig& cfg, int in_h, int in_w) {
  return count(cfg, in_h, in_w, true);
}

std::uint64_t count_params(const BackboneConfig& cfg) {
  cfg.validate();
  auto layer = [](int c_out, int c_in) {
    return static_cast<std::uint64_t>(c_out) * c_in * 9 + static_cast<std::uint64_t>(c_out);
  };
  std::uint64_t n = layer(cfg.stage_channels[0], cfg.in_channels);
  for (int s = 0; s < kStages; ++s) {
    const int c = cfg.stage_channels[s];
    if (s > 0) n += layer(c, cfg.stage_channels[s - 1]);
    n += static_cast<std::uint64_t>(cfg.stage_blocks[s]) * kLayersPerBlock * layer(c, c);
  }
  return n;
}

std::array<Monomial, kStages> per_block_macs_symbolic(const BackboneConfig& cfg) {
  cfg.validate();
  const int c1 = cfg.stage_channels[0];
  std::array<Monomial, kStages> out{};
  for (int s = 0; s < kStages; ++s) {
    const int ratio = cfg.stage_channels[s] / c1;
    PD_CHECK(std::has_single_bit(static_cast<unsigned>(ratio)) &&
                 ratio * c1 == cfg.stage_channels[s],
             ErrorCode::kInvalidArgument, "stage widths are not power-of-two multiples of C1");
    const int width_exp = std::countr_zero(static_cast<unsigned>(ratio));
    // kLayersPerBlock layers of 9 * C_s^2 * H_s * W_s each, with
    // C_s = C1 * 2^width_exp and H_s * W_s = H1 * W1 * 2^(-2s).
    out[s] = Monomial{static_cast<std::int64_t>(kLayersPerBlock) * 9, 2 * width_exp - 2 * s, 2, 1};
  }
  return out;
}

}  // namespace pillardet::repnet

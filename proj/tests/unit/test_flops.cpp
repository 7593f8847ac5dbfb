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

#include "repnet/flops.hpp"

using namespace pillardet::repnet;

namespace {

BackboneConfig with_blocks(std::array<int, kStages> blocks) {
  BackboneConfig cfg;
  cfg.stage_blocks = blocks;
  return cfg;
}

/// Independent count: two 3x3 layers at each stage's resolution.
std::uint64_t hand_block(int c, int h, int w) {
  return 2ull * static_cast<std::uint64_t>(c) * c * 9 * h * w;
}

}  // namespace

TEST_CASE("conv MACs") {
  CHECK(conv_macs(4, 3, 3, 5, 6) == 4ull * 3 * 9 * 30);
  CHECK(conv_macs(1, 1, 1, 1, 1) == 1);
}

TEST_CASE("per-block cost is stage-invariant") {
  const auto r = count_macs(with_blocks({6, 6, 3, 1}), 752, 752);
  for (int s = 0; s < kStages; ++s) {
    CHECK(r.stages[s].per_block == r.stages[0].per_block);
    const int side = 752 >> s;
    CHECK(r.stages[s].h == side);
    CHECK(r.stages[s].per_block == hand_block(r.stages[s].channels, side, side));
  }
  const auto sym = per_block_macs_symbolic(BackboneConfig{});
  for (int s = 1; s < kStages; ++s) CHECK(sym[s] == sym[0]);
}

TEST_CASE("moving blocks between stages keeps the total") {
  const auto a = count_macs(with_blocks({6, 6, 3, 1}), 752, 752);
  const auto b = count_macs(with_blocks({3, 4, 6, 3}), 752, 752);
  CHECK(a.total == b.total);
  CHECK(count_macs(with_blocks({6, 6, 3, 1}), 720, 720).total ==
        count_macs(with_blocks({3, 4, 6, 3}), 720, 720).total);
}

TEST_CASE("cost is affine in block count") {
  const auto base = count_macs(with_blocks({0, 0, 0, 0}), 64, 64);
  CHECK(base.total > 0);
  CHECK(base.total == base.stem + base.stages[1].transition + base.stages[2].transition +
                          base.stages[3].transition);
  const std::uint64_t unit = base.stages[0].per_block;
  for (int s = 0; s < kStages; ++s) {
    std::array<int, kStages> blocks{0, 0, 0, 0};
    blocks[s] = 2;
    const auto r = count_macs(with_blocks(blocks), 64, 64);
    CHECK(r.total - base.total == 2 * unit);
  }
  CHECK(count_macs(with_blocks({0, 2, 2, 2}), 64, 64).total == base.total + 6 * unit);
}

TEST_CASE("train-form cost exceeds fused cost") {
  const auto cfg = with_blocks({2, 2, 2, 2});
  CHECK(count_train_macs(cfg, 32, 32).total > count_macs(cfg, 32, 32).total);
}

TEST_CASE("parameter counts") {
  CHECK(count_params(with_blocks({3, 4, 6, 3})) == 24228160ull);
  CHECK(count_params(with_blocks({6, 6, 3, 1})) == 12060352ull);
  // Independent tally for a tiny configuration.
  BackboneConfig tiny;
  tiny.stage_blocks = {1, 0, 0, 1};
  tiny.stage_channels = {2, 4, 8, 16};
  tiny.in_channels = 3;
  auto c3 = [](int co, int ci) { return static_cast<std::uint64_t>(co) * ci * 9 + co; };
  const std::uint64_t expect = c3(2, 3) + 2 * c3(2, 2) + c3(4, 2) + c3(8, 4) + c3(16, 8) + 2 * c3(16, 16);
  CHECK(count_params(tiny) == expect);
}

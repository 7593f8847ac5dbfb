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

#include "repnet/repblock.hpp"

#include <cmath>

namespace pillardet::repnet {

void RepBlockParams::validate() const {
  conv3.validate();
  conv1.validate();
  bn3.validate();
  bn1.validate();
  PD_CHECK(conv3.k == 3 && conv1.k == 1, ErrorCode::kShapeMismatch,
           "rep block needs a 3x3 and a 1x1 branch");
  PD_CHECK(conv3.c_in == conv1.c_in && conv3.c_out == conv1.c_out &&
               conv3.stride == conv1.stride,
           ErrorCode::kShapeMismatch, "rep block branches disagree on shape or stride");
  PD_CHECK(bn3.channels() == conv3.c_out && bn1.channels() == conv1.c_out,
           ErrorCode::kShapeMismatch, "rep block BN width does not match its conv");
  if (bn_id) {
    bn_id->validate();
    PD_CHECK(conv3.c_in == conv3.c_out && conv3.stride == 1, ErrorCode::kShapeMismatch,
             "identity branch requires c_in == c_out and stride 1");
    PD_CHECK(bn_id->channels() == conv3.c_out, ErrorCode::kShapeMismatch,
             "identity BN width does not match the block");
  }
}

DenseTensor rep_block_forward(const DenseTensor& x, const RepBlockParams& b) {
  b.validate();
  DenseTensor y = batch_norm(conv2d(x, b.conv3), b.bn3);
  add_inplace(y, batch_norm(conv2d(x, b.conv1), b.bn1));
  if (b.bn_id) add_inplace(y, batch_norm(x, *b.bn_id));
  relu_inplace(y);
  return y;
}

ConvParams fuse_rep_block(const RepBlockParams& b) {
  b.validate();
  ConvParams fused = bn_fold(b.conv3, b.bn3);
  const ConvParams one = pad_1x1_to_3x3(bn_fold(b.conv1, b.bn1));
  for (std::size_t i = 0; i < fused.kernel.size(); ++i) fused.kernel[i] += one.kernel[i];
  for (std::size_t i = 0; i < fused.bias.size(); ++i) fused.bias[i] += one.bias[i];
  if (b.bn_id) {
    const ConvParams id = bn_fold(identity_to_3x3(b.c_out()), *b.bn_id);
    for (std::size_t i = 0; i < fused.kernel.size(); ++i) fused.kernel[i] += id.kernel[i];
    for (std::size_t i = 0; i < fused.bias.size(); ++i) fused.bias[i] += id.bias[i];
  }
  return fused;
}

RepBlockParams neutral_rep_block(int c_in, int c_out, int stride) {
  RepBlockParams b;
  b.conv3 = ConvParams::zeros(c_out, c_in, 3, stride);
  b.conv1 = ConvParams::zeros(c_out, c_in, 1, stride);
  b.bn3 = BNParams::neutral(c_out);
  b.bn1 = BNParams::neutral(c_out);
  if (c_in == c_out && stride == 1) b.bn_id = BNParams::neutral(c_out);
  return b;
}

namespace {

void fill_normal(std::vector<float>& v, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, sd);
  for (float& x : v) x = static_cast<float>(nd(rng));
}

BNParams random_bn(int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BNParams bn;
  bn.gamma.resize(c);
  bn.beta.resize(c);
  bn.running_mean.resize(c);
  bn.running_var.resize(c);
  for (int i = 0; i < c; ++i) {
    bn.gamma[i] = static_cast<float>(0.4 + 0.4 * u(rng));
    bn.beta[i] = static_cast<float>(0.2 * (u(rng) - 0.5));
    bn.running_mean[i] = static_cast<float>(0.2 * (u(rng) - 0.5));
    bn.running_var[i] = static_cast<float>(0.5 + u(rng));
  }
  return bn;
}

}  // namespace

RepBlockParams random_rep_block(int c_in, int c_out, int stride, std::mt19937_64& rng) {
  RepBlockParams b = neutral_rep_block(c_in, c_out, stride);
  fill_normal(b.conv3.kernel, std::sqrt(2.0 / (9.0 * c_in)), rng);
  fill_normal(b.conv1.kernel, std::sqrt(1.0 / c_in), rng);
  fill_normal(b.conv3.bias, 0.05, rng);
  fill_normal(b.conv1.bias, 0.05, rng);
  b.bn3 = random_bn(c_out, rng);
  b.bn1 = random_bn(c_out, rng);
  if (b.bn_id) b.bn_id = random_bn(c_out, rng);
  return b;
}

int RepLayer::c_in() const {
  return fused() ? std::get<ConvParams>(params).c_in : std::get<RepBlockParams>(params).c_in();
}
int RepLayer::c_out() const {
  return fused() ? std::get<ConvParams>(params).c_out : std::get<RepBlockParams>(params).c_out();
}
int RepLayer::stride() const {
  return fused() ? std::get<ConvParams>(params).stride
                 : std::get<RepBlockParams>(params).stride();
}

DenseTensor rep_layer_forward(const DenseTensor& x, const RepLayer& layer) {
  if (const auto* b = std::get_if<RepBlockParams>(&layer.params)) return rep_block_forward(x, *b);
  DenseTensor y = conv2d(x, std::get<ConvParams>(layer.params));
  relu_inplace(y);
  return y;
}

RepLayer fuse_layer(const RepLayer& layer) {
  if (layer.fused()) return layer;
  return RepLayer{fuse_rep_block(std::get<RepBlockParams>(layer.params))};
}

}  // namespace pillardet::repnet

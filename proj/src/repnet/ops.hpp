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

#include <vector>

#include "repnet/tensor.hpp"

namespace pillardet::repnet {

/// Square convolution with bias. Kernel layout (c_out, c_in, k, k).
struct ConvParams {
  int c_out = 0;
  int c_in = 0;
  int k = 3;
  int stride = 1;
  int pad = 1;
  std::vector<float> kernel;
  std::vector<float> bias;

  static ConvParams zeros(int c_out, int c_in, int k, int stride);

  float& weight(int o, int i, int ky, int kx) {
    return kernel[((static_cast<std::size_t>(o) * c_in + i) * k + ky) * k + kx];
  }
  float weight(int o, int i, int ky, int kx) const {
    return kernel[((static_cast<std::size_t>(o) * c_in + i) * k + ky) * k + kx];
  }

  /// k in {1, 3}, stride in {1, 2}, pad == k / 2, buffer sizes consistent.
  void validate() const;
  std::size_t parameter_count() const { return kernel.size() + bias.size(); }
};

/// Inference-mode batch normalization.
struct BNParams {
  std::vector<float> gamma, beta, running_mean, running_var;
  float eps = 1e-5f;

  static BNParams neutral(int channels, float eps = 1e-5f);

  int channels() const { return static_cast<int>(gamma.size()); }
  void validate() const;

  /// Per-channel y = x * scale + shift. Every code path that applies or folds
  /// a BN goes through these, so branch and fused forms round identically.
  std::vector<float> scale() const;
  std::vector<float> shift() const;
};

/// Output spatial extent of a convolution: floor((n + 2 pad - k) / stride) + 1.
int conv_out_extent(int n, int k, int stride, int pad);

DenseTensor conv2d(const DenseTensor& x, const ConvParams& p);
DenseTensor batch_norm(const DenseTensor& x, const BNParams& bn);
void relu_inplace(DenseTensor& x);
void add_inplace(DenseTensor& acc, const DenseTensor& x);
DenseTensor upsample_nearest2x(const DenseTensor& x);
DenseTensor concat_channels(const DenseTensor& a, const DenseTensor& b);

/// Absorbs BN into the preceding convolution:
/// w' = w * g / sqrt(v + eps), b' = beta + (b - mean) * g / sqrt(v + eps).
ConvParams bn_fold(const ConvParams& conv, const BNParams& bn);

/// Embeds a 1x1 kernel at the center of a zero 3x3 kernel (pad 0 -> 1).
ConvParams pad_1x1_to_3x3(const ConvParams& p);

/// Dirac 3x3 kernel: conv with it is the identity on c channels.
ConvParams identity_to_3x3(int channels);

}  // namespace pillardet::repnet

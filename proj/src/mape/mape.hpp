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

// Max-and-attention pillar encoding.
//
// Points of one pillar are lifted by a per-point MLP into R^D, then reduced
// over the point axis twice: a channel-wise max, and an attention-weighted
// sum whose weights come from a second per-point affine map followed by a
// softmax over points taken independently for every channel. The pillar
// feature is the mean of the two reductions.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pillargrid/pillargrid.hpp"

namespace pillardet::mape {

/// Dense row-major double matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// Normalization statistics source. kFolded uses the stored running mean and
/// variance (inference); kBatch recomputes them over the rows being encoded.
enum class NormMode { kFolded, kBatch };

/// affine -> (optional) normalization -> ReLU.
struct EncodeLayer {
  Matrix weight;  // (out, in)
  std::vector<double> bias;
  bool normalize = true;
  std::vector<double> gamma, beta, running_mean, running_var;
  double eps = 1e-3;

  int in_dim() const { return weight.cols; }
  int out_dim() const { return weight.rows; }
};

struct MapeParams {
  std::vector<EncodeLayer> encode;  // first layer consumes 11 features
  Matrix score_weight;              // (D, D)
  std::vector<double> score_bias;   // D
  NormMode norm_mode = NormMode::kFolded;

  int width() const { return score_weight.rows; }
  void validate() const;
};

/// Random parameters; `layers` encode layers of width `width`.
MapeParams random_params(int width, int layers, std::mt19937_64& rng);

/// Identity-configured: D = 11, unit weights, zero bias, normalization off,
/// zero score map (uniform attention).
MapeParams identity_params();

Matrix encode_points(std::span<const pillargrid::AugmentedPoint> aug, const MapeParams& params);

std::vector<double> max_pool(const Matrix& point_features);

struct AttentionResult {
  std::vector<double> pooled;  // D
  Matrix scores;               // (N_v, D), columns sum to 1
};

AttentionResult attention_pool(const Matrix& point_features, const MapeParams& params);

struct PillarFeature {
  std::vector<double> f;
  // Filled when requested.
  Matrix point_features;
  Matrix scores;
  std::vector<double> f_max;
  std::vector<double> f_att;
};

/// f = (f_max + f_att) / 2.
PillarFeature mape_encode(std::span<const pillargrid::AugmentedPoint> aug,
                          const MapeParams& params, bool keep_intermediates = false);

struct EncodeLayerGrad {
  Matrix weight;
  std::vector<double> bias;
  std::vector<double> gamma, beta;  // empty when the layer does not normalize
};

struct MapeGradients {
  std::vector<EncodeLayerGrad> encode;
  Matrix score_weight;
  std::vector<double> score_bias;
  Matrix input;  // (N_v, 11)
};

/// Gradients of <upstream, f> with respect to every parameter and input. In
/// kBatch mode the batch statistics are differentiated through.
MapeGradients mape_backward(std::span<const pillargrid::AugmentedPoint> aug,
                            const MapeParams& params, std::span<const double> upstream);

}  // namespace pillardet::mape

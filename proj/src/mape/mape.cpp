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

#include "mape/mape.hpp"

#include <algorithm>
#include <cmath>

namespace pillardet::mape {

void MapeParams::validate() const {
  PD_CHECK(!encode.empty(), ErrorCode::kShapeMismatch, "encoder needs at least one layer");
  int in = pillargrid::kAugmentedDim;
  for (std::size_t l = 0; l < encode.size(); ++l) {
    const EncodeLayer& L = encode[l];
    PD_CHECK(L.in_dim() == in && L.out_dim() > 0 &&
                 L.weight.data.size() == static_cast<std::size_t>(L.out_dim()) * L.in_dim() &&
                 L.bias.size() == static_cast<std::size_t>(L.out_dim()),
             ErrorCode::kShapeMismatch, "encoder layer ", l, " expects input width ", in,
             " and consistent buffers");
    if (L.normalize) {
      const auto d = static_cast<std::size_t>(L.out_dim());
      PD_CHECK(L.gamma.size() == d && L.beta.size() == d && L.running_mean.size() == d &&
                   L.running_var.size() == d && L.eps > 0.0,
               ErrorCode::kShapeMismatch, "encoder layer ", l, " has inconsistent statistics");
    }
    for (double v : L.weight.data) {
      PD_CHECK(std::isfinite(v), ErrorCode::kInvalidArgument, "non-finite encoder weight");
    }
    in = L.out_dim();
  }
  PD_CHECK(score_weight.rows == in && score_weight.cols == in &&
               score_bias.size() == static_cast<std::size_t>(in),
           ErrorCode::kShapeMismatch, "score map must be ", in, "x", in);
  for (double v : score_weight.data) {
    PD_CHECK(std::isfinite(v), ErrorCode::kInvalidArgument, "non-finite score weight");
  }
}

MapeParams random_params(int width, int layers, std::mt19937_64& rng) {
  PD_CHECK(width > 0 && layers > 0, ErrorCode::kInvalidArgument,
           "encoder width and depth must be positive");
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MapeParams p;
  int in = pillargrid::kAugmentedDim;
  for (int l = 0; l < layers; ++l) {
    EncodeLayer L;
    L.weight = Matrix(width, in);
    for (double& v : L.weight.data) v = nd(rng) / std::sqrt(static_cast<double>(in));
    L.bias.resize(width);
    for (double& v : L.bias) v = 0.1 * nd(rng);
    L.gamma.resize(width);
    L.beta.resize(width);
    L.running_mean.resize(width);
    L.running_var.resize(width);
    for (int j = 0; j < width; ++j) {
      L.gamma[j] = 0.5 + u(rng);
      L.beta[j] = 0.1 * nd(rng);
      L.running_mean[j] = 0.1 * nd(rng);
      L.running_var[j] = 0.5 + u(rng);
    }
    p.encode.push_back(std::move(L));
    in = width;
  }
  p.score_weight = Matrix(width, width);
  for (double& v : p.score_weight.data) v = nd(rng) / std::sqrt(static_cast<double>(width));
  p.score_bias.resize(width);
  for (double& v : p.score_bias) v = 0.1 * nd(rng);
  return p;
}

MapeParams identity_params() {
  constexpr int d = pillargrid::kAugmentedDim;
  MapeParams p;
  EncodeLayer L;
  L.weight = Matrix(d, d);
  for (int i = 0; i < d; ++i) L.weight(i, i) = 1.0;
  L.bias.assign(d, 0.0);
  L.normalize = false;
  p.encode.push_back(std::move(L));
  p.score_weight = Matrix(d, d);
  p.score_bias.assign(d, 0.0);
  return p;
}

namespace {

struct LayerCache {
  Matrix input;  // (N, in)
  Matrix xhat;   // normalized pre-activation (N, out); equals z when not normalizing
  Matrix y;      // pre-rectifier output
  std::vector<double> inv_std;
};

Matrix to_matrix(std::span<const pillargrid::AugmentedPoint> aug) {
  Matrix m(static_cast<int>(aug.size()), pillargrid::kAugmentedDim);
  for (std::size_t i = 0; i < aug.size(); ++i) {
    for (int j = 0; j < pillargrid::kAugmentedDim; ++j) m(static_cast<int>(i), j) = aug[i][j];
  }
  return m;
}

Matrix layer_forward(const Matrix& x, const EncodeLayer& L, NormMode mode, LayerCache* cache) {
  const int n = x.rows, out = L.out_dim(), in = L.in_dim();
  Matrix z(n, out);
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < out; ++o) {
      double acc = L.bias[o];
      for (int k = 0; k < in; ++k) acc += L.weight(o, k) * x(i, k);
      z(i, o) = acc;
    }
  }
  Matrix xhat = z;
  Matrix y = z;
  std::vector<double> inv(out, 1.0);
  if (L.normalize) {
    for (int o = 0; o < out; ++o) {
      double mean = L.running_mean[o];
      double var = L.running_var[o];
      if (mode == NormMode::kBatch) {
        mean = 0.0;
        for (int i = 0; i < n; ++i) mean += z(i, o);
        mean /= n;
        var = 0.0;
        for (int i = 0; i < n; ++i) var += (z(i, o) - mean) * (z(i, o) - mean);
        var /= n;
      }
      inv[o] = 1.0 / std::sqrt(var + L.eps);
      for (int i = 0; i < n; ++i) {
        xhat(i, o) = (z(i, o) - mean) * inv[o];
        y(i, o) = L.gamma[o] * xhat(i, o) + L.beta[o];
      }
    }
  }
  Matrix a = y;
  for (double& v : a.data) v = v > 0.0 ? v : 0.0;
  if (cache) *cache = LayerCache{x, std::move(xhat), std::move(y), std::move(inv)};
  return a;
}

Matrix encode_impl(std::span<const pillargrid::AugmentedPoint> aug, const MapeParams& params,
                   std::vector<LayerCache>* caches) {
  params.validate();
  PD_CHECK(!aug.empty(), ErrorCode::kInvalidArgument, "cannot encode an empty pillar");
  Matrix h = to_matrix(aug);
  if (caches) caches->resize(params.encode.size());
  for (std::size_t l = 0; l < params.encode.size(); ++l) {
    h = layer_forward(h, params.encode[l], params.norm_mode, caches ? &(*caches)[l] : nullptr);
  }
  return h;
}

}  // namespace

Matrix encode_points(std::span<const pillargrid::AugmentedPoint> aug, const MapeParams& params) {
  return encode_impl(aug, params, nullptr);
}

std::vector<double> max_pool(const Matrix& pe) {
  PD_CHECK(pe.rows >= 1, ErrorCode::kInvalidArgument, "max-pool over an empty pillar");
  std::vector<double> out(pe.cols);
  for (int j = 0; j < pe.cols; ++j) {
    double m = pe(0, j);
    for (int i = 1; i < pe.rows; ++i) m = std::max(m, pe(i, j));
    out[j] = m;
  }
  return out;
}

AttentionResult attention_pool(const Matrix& pe, const MapeParams& params) {
  PD_CHECK(pe.rows >= 1, ErrorCode::kInvalidArgument, "attention-pool over an empty pillar");
  const int n = pe.rows, d = pe.cols;
  PD_CHECK(params.score_weight.rows == d && params.score_weight.cols == d &&
               params.score_bias.size() == static_cast<std::size_t>(d),
           ErrorCode::kShapeMismatch, "score map is ", params.score_weight.rows, "x",
           params.score_weight.cols, " but features have width ", d);
  AttentionResult r{std::vector<double>(d, 0.0), Matrix(n, d)};
  Matrix& s = r.scores;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      double acc = params.score_bias[j];
      for (int k = 0; k < d; ++k) acc += params.score_weight(j, k) * pe(i, k);
      s(i, j) = acc;
    }
  }
  // Softmax over the point axis, one channel at a time.
  for (int j = 0; j < d; ++j) {
    double m = s(0, j);
    for (int i = 1; i < n; ++i) m = std::max(m, s(i, j));
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
      s(i, j) = std::exp(s(i, j) - m);
      z += s(i, j);
    }
    for (int i = 0; i < n; ++i) s(i, j) /= z;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += s(i, j) * pe(i, j);
    r.pooled[j] = acc;
  }
  return r;
}

PillarFeature mape_encode(std::span<const pillargrid::AugmentedPoint> aug,
                          const MapeParams& params, bool keep_intermediates) {
  Matrix pe = encode_points(aug, params);
  std::vector<double> fm = max_pool(pe);
  AttentionResult att = attention_pool(pe, params);
  PillarFeature out;
  out.f.resize(fm.size());
  for (std::size_t j = 0; j < fm.size(); ++j) out.f[j] = (fm[j] + att.pooled[j]) / 2.0;
  if (keep_intermediates) {
    out.point_features = std::move(pe);
    out.scores = std::move(att.scores);
    out.f_max = std::move(fm);
    out.f_att = std::move(att.pooled);
  }
  return out;
}

MapeGradients mape_backward(std::span<const pillargrid::AugmentedPoint> aug,
                            const MapeParams& params, std::span<const double> upstream) {
  std::vector<LayerCache> caches;
  const Matrix pe = encode_impl(aug, params, &caches);
  const int n = pe.rows, d = pe.cols;
  PD_CHECK(upstream.size() == static_cast<std::size_t>(d), ErrorCode::kShapeMismatch,
           "upstream gradient has ", upstream.size(), " entries, features have ", d);
  const AttentionResult att = attention_pool(pe, params);
  const Matrix& s = att.scores;

  MapeGradients g;
  Matrix dpe(n, d);

  // Max branch: the first arg-max row takes the gradient.
  for (int j = 0; j < d; ++j) {
    int arg = 0;
    for (int i = 1; i < n; ++i) {
      if (pe(i, j) > pe(arg, j)) arg = i;
    }
    dpe(arg, j) += 0.5 * upstream[j];
  }

  // Attention branch.
  Matrix dlogit(n, d);
  for (int j = 0; j < d; ++j) {
    const double gj = 0.5 * upstream[j];
    double weighted = 0.0;
    for (int i = 0; i < n; ++i) {
      dpe(i, j) += s(i, j) * gj;
      weighted += s(i, j) * gj * pe(i, j);
    }
    for (int i = 0; i < n; ++i) dlogit(i, j) = s(i, j) * (gj * pe(i, j) - weighted);
  }
  g.score_weight = Matrix(d, d);
  g.score_bias.assign(d, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      const double dl = dlogit(i, j);
      g.score_bias[j] += dl;
      for (int k = 0; k < d; ++k) {
        g.score_weight(j, k) += dl * pe(i, k);
        dpe(i, k) += dl * params.score_weight(j, k);
      }
    }
  }

  // Encoder layers, last to first.
  g.encode.resize(params.encode.size());
  Matrix da = std::move(dpe);
  for (std::size_t l = params.encode.size(); l-- > 0;) {
    const EncodeLayer& L = params.encode[l];
    const LayerCache& c = caches[l];
    const int out = L.out_dim(), in = L.in_dim();
    EncodeLayerGrad& lg = g.encode[l];

    Matrix dy = da;
    for (std::size_t k = 0; k < dy.data.size(); ++k) {
      if (!(c.y.data[k] > 0.0)) dy.data[k] = 0.0;
    }
    Matrix dz(n, out);
    if (L.normalize) {
      lg.gamma.assign(out, 0.0);
      lg.beta.assign(out, 0.0);
      for (int o = 0; o < out; ++o) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int i = 0; i < n; ++i) {
          lg.gamma[o] += dy(i, o) * c.xhat(i, o);
          lg.beta[o] += dy(i, o);
          const double dxhat = dy(i, o) * L.gamma[o];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * c.xhat(i, o);
        }
        for (int i = 0; i < n; ++i) {
          const double dxhat = dy(i, o) * L.gamma[o];
          if (params.norm_mode == NormMode::kBatch) {
            dz(i, o) = c.inv_std[o] / n * (n * dxhat - sum_dxhat - c.xhat(i, o) * sum_dxhat_xhat);
          } else {
            dz(i, o) = dxhat * c.inv_std[o];
          }
        }
      }
    } else {
      dz = dy;
    }

    lg.weight = Matrix(out, in);
    lg.bias.assign(out, 0.0);
    Matrix dx(n, in);
    for (int i = 0; i < n; ++i) {
      for (int o = 0; o < out; ++o) {
        const double v = dz(i, o);
        if (v == 0.0) continue;
        lg.bias[o] += v;
        for (int k = 0; k < in; ++k) {
          lg.weight(o, k) += v * c.input(i, k);
          dx(i, k) += v * L.weight(o, k);
        }
      }
    }
    da = std::move(dx);
  }
  g.input = std::move(da);
  return g;
}

}  // namespace pillardet::mape

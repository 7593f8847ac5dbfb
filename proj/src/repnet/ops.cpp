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

#include "repnet/ops.hpp"

#include <algorithm>
#include <cmath>

namespace pillardet::repnet {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

DenseTensor::DenseTensor(Shape4 shape, float fill) : shape_(shape) {
  PD_CHECK(shape.n >= 0 && shape.c >= 0 && shape.h >= 0 && shape.w >= 0,
           ErrorCode::kShapeMismatch, "negative tensor extent ", shape.str());
  data_.assign(shape.count(), fill);
}

bool DenseTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

double max_relative_discrepancy(const DenseTensor& a, const DenseTensor& reference) {
  PD_CHECK(a.shape() == reference.shape(), ErrorCode::kShapeMismatch,
           "cannot compare tensors of shapes ", a.shape().str(), " and ", reference.shape().str());
  double max_diff = 0.0;
  double max_ref = 0.0;
  const auto va = a.values();
  const auto vr = reference.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(static_cast<double>(va[i]) - vr[i]));
    max_ref = std::max(max_ref, std::abs(static_cast<double>(vr[i])));
  }
  if (max_diff == 0.0) return 0.0;
  return max_diff / std::max(max_ref, 1e-30);
}

ConvParams ConvParams::zeros(int c_out, int c_in, int k, int stride) {
  ConvParams p;
  p.c_out = c_out;
  p.c_in = c_in;
  p.k = k;
  p.stride = stride;
  p.pad = k / 2;
  p.kernel.assign(static_cast<std::size_t>(c_out) * c_in * k * k, 0.f);
  p.bias.assign(static_cast<std::size_t>(c_out), 0.f);
  return p;
}

void ConvParams::validate() const {
  PD_CHECK(k == 1 || k == 3, ErrorCode::kInvalidArgument, "kernel size must be 1 or 3, got ", k);
  PD_CHECK(stride == 1 || stride == 2, ErrorCode::kInvalidArgument,
           "stride must be 1 or 2, got ", stride);
  PD_CHECK(pad == k / 2, ErrorCode::kInvalidArgument, "padding must be k/2");
  PD_CHECK(c_out > 0 && c_in > 0, ErrorCode::kShapeMismatch, "conv channels must be positive");
  PD_CHECK(kernel.size() == static_cast<std::size_t>(c_out) * c_in * k * k &&
               bias.size() == static_cast<std::size_t>(c_out),
           ErrorCode::kShapeMismatch, "conv buffers do not match (", c_out, ",", c_in, ",", k,
           ",", k, ")");
}

BNParams BNParams::neutral(int channels, float eps) {
  BNParams bn;
  bn.eps = eps;
  bn.gamma.assign(channels, 1.f);
  bn.beta.assign(channels, 0.f);
  bn.running_mean.assign(channels, 0.f);
  bn.running_var.assign(channels, 1.f - eps);
  return bn;
}

void BNParams::validate() const {
  const std::size_t c = gamma.size();
  PD_CHECK(c > 0 && beta.size() == c && running_mean.size() == c && running_var.size() == c,
           ErrorCode::kShapeMismatch, "batch-norm buffers have inconsistent lengths");
  PD_CHECK(eps > 0.f, ErrorCode::kInvalidArgument, "batch-norm epsilon must be positive");
  for (std::size_t i = 0; i < c; ++i) {
    PD_CHECK(running_var[i] >= 0.f, ErrorCode::kInvalidArgument,
             "batch-norm running variance must be non-negative (channel ", i, ")");
  }
}

std::vector<float> BNParams::scale() const {
  std::vector<float> s(gamma.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = static_cast<float>(static_cast<double>(gamma[i]) /
                              std::sqrt(static_cast<double>(running_var[i]) + eps));
  }
  return s;
}

std::vector<float> BNParams::shift() const {
  std::vector<float> s(gamma.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double sc = static_cast<double>(gamma[i]) /
                      std::sqrt(static_cast<double>(running_var[i]) + eps);
    s[i] = static_cast<float>(beta[i] - static_cast<double>(running_mean[i]) * sc);
  }
  return s;
}

int conv_out_extent(int n, int k, int stride, int pad) {
  return (n + 2 * pad - k) / stride + 1;
}

DenseTensor conv2d(const DenseTensor& x, const ConvParams& p) {
  p.validate();
  PD_CHECK(x.c() == p.c_in, ErrorCode::kShapeMismatch, "conv expects ", p.c_in,
           " input channels, tensor has shape ", x.shape().str());
  PD_CHECK(x.h() > 0 && x.w() > 0, ErrorCode::kShapeMismatch, "conv input is empty");
  const int ho = conv_out_extent(x.h(), p.k, p.stride, p.pad);
  const int wo = conv_out_extent(x.w(), p.k, p.stride, p.pad);
  DenseTensor y(x.n(), p.c_out, ho, wo);
  const int s = p.stride;

  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < p.c_out; ++o) {
      float* out = y.plane(n, o);
      std::fill(out, out + static_cast<std::size_t>(ho) * wo, p.bias[o]);
      for (int i = 0; i < p.c_in; ++i) {
        const float* in = x.plane(n, i);
        for (int ky = 0; ky < p.k; ++ky) {
          for (int kx = 0; kx < p.k; ++kx) {
            const float wv = p.weight(o, i, ky, kx);
            // Valid output columns: 0 <= ox*s + kx - pad < w.
            const int lo_num = p.pad - kx;
            const int ox_lo = lo_num > 0 ? (lo_num + s - 1) / s : 0;
            const int ox_hi = std::min(wo - 1, (x.w() - 1 - kx + p.pad) / s);
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * s + ky - p.pad;
              if (iy < 0 || iy >= x.h()) continue;
              const float* row = in + static_cast<std::size_t>(iy) * x.w();
              float* orow = out + static_cast<std::size_t>(oy) * wo;
              if (s == 1) {
                const float* r = row + (kx - p.pad);
                for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * r[ox];
              } else {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) orow[ox] += wv * row[ox * s + kx - p.pad];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

DenseTensor batch_norm(const DenseTensor& x, const BNParams& bn) {
  bn.validate();
  PD_CHECK(x.c() == bn.channels(), ErrorCode::kShapeMismatch, "batch-norm has ", bn.channels(),
           " channels, tensor has shape ", x.shape().str());
  const auto sc = bn.scale();
  const auto sh = bn.shift();
  DenseTensor y(x.shape());
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const float* in = x.plane(n, c);
      float* out = y.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) out[i] = in[i] * sc[c] + sh[c];
    }
  }
  return y;
}

void relu_inplace(DenseTensor& x) {
  for (float& v : x.values()) v = v > 0.f ? v : 0.f;
}

void add_inplace(DenseTensor& acc, const DenseTensor& x) {
  PD_CHECK(acc.shape() == x.shape(), ErrorCode::kShapeMismatch, "cannot add tensors of shapes ",
           acc.shape().str(), " and ", x.shape().str());
  auto a = acc.values();
  const auto b = x.values();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

DenseTensor upsample_nearest2x(const DenseTensor& x) {
  DenseTensor y(x.n(), x.c(), x.h() * 2, x.w() * 2);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int oy = 0; oy < y.h(); ++oy) {
        for (int ox = 0; ox < y.w(); ++ox) y.at(n, c, oy, ox) = x.at(n, c, oy / 2, ox / 2);
      }
    }
  }
  return y;
}

DenseTensor concat_channels(const DenseTensor& a, const DenseTensor& b) {
  PD_CHECK(a.n() == b.n() && a.h() == b.h() && a.w() == b.w(), ErrorCode::kShapeMismatch,
           "cannot concatenate ", a.shape().str(), " and ", b.shape().str());
  DenseTensor y(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t hw = static_cast<std::size_t>(a.h()) * a.w();
  for (int n = 0; n < a.n(); ++n) {
    for (int c = 0; c < a.c(); ++c) std::copy_n(a.plane(n, c), hw, y.plane(n, c));
    for (int c = 0; c < b.c(); ++c) std::copy_n(b.plane(n, c), hw, y.plane(n, a.c() + c));
  }
  return y;
}

ConvParams bn_fold(const ConvParams& conv, const BNParams& bn) {
  conv.validate();
  bn.validate();
  PD_CHECK(bn.channels() == conv.c_out, ErrorCode::kShapeMismatch, "batch-norm has ",
           bn.channels(), " channels but the conv produces ", conv.c_out);
  const auto sc = bn.scale();
  ConvParams out = conv;
  const std::size_t per_out = static_cast<std::size_t>(conv.c_in) * conv.k * conv.k;
  for (int o = 0; o < conv.c_out; ++o) {
    for (std::size_t j = 0; j < per_out; ++j) out.kernel[o * per_out + j] *= sc[o];
    const double s = static_cast<double>(bn.gamma[o]) /
                     std::sqrt(static_cast<double>(bn.running_var[o]) + bn.eps);
    out.bias[o] = static_cast<float>(
        bn.beta[o] + (static_cast<double>(conv.bias[o]) - bn.running_mean[o]) * s);
  }
  return out;
}

ConvParams pad_1x1_to_3x3(const ConvParams& p) {
  p.validate();
  PD_CHECK(p.k == 1, ErrorCode::kInvalidArgument, "expected a 1x1 kernel, got k=", p.k);
  ConvParams out = ConvParams::zeros(p.c_out, p.c_in, 3, p.stride);
  for (int o = 0; o < p.c_out; ++o) {
    for (int i = 0; i < p.c_in; ++i) out.weight(o, i, 1, 1) = p.weight(o, i, 0, 0);
  }
  out.bias = p.bias;
  return out;
}

ConvParams identity_to_3x3(int channels) {
  PD_CHECK(channels > 0, ErrorCode::kInvalidArgument, "identity kernel needs channels > 0");
  ConvParams out = ConvParams::zeros(channels, channels, 3, 1);
  for (int c = 0; c < channels; ++c) out.weight(c, c, 1, 1) = 1.f;
  return out;
}

}  // namespace pillardet::repnet

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

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "model/model.hpp"

namespace pillardet::model {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "pillardet-checkpoint";
constexpr int kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in native order, which must be little-endian");

struct TensorRef {
  std::string name;
  std::vector<int> shape;
  float* f32 = nullptr;
  double* f64 = nullptr;
  std::size_t count = 0;

  std::size_t nbytes() const { return count * (f32 ? sizeof(float) : sizeof(double)); }
};

void add(std::vector<TensorRef>& refs, std::string name, std::vector<int> shape,
         std::vector<float>& v) {
  refs.push_back({std::move(name), std::move(shape), v.data(), nullptr, v.size()});
}

void add(std::vector<TensorRef>& refs, std::string name, std::vector<int> shape,
         std::vector<double>& v) {
  refs.push_back({std::move(name), std::move(shape), nullptr, v.data(), v.size()});
}

void add_conv(std::vector<TensorRef>& refs, const std::string& prefix, repnet::ConvParams& c) {
  add(refs, prefix + ".kernel", {c.c_out, c.c_in, c.k, c.k}, c.kernel);
  add(refs, prefix + ".bias", {c.c_out}, c.bias);
}

void add_bn(std::vector<TensorRef>& refs, const std::string& prefix, repnet::BNParams& b) {
  const int c = b.channels();
  add(refs, prefix + ".gamma", {c}, b.gamma);
  add(refs, prefix + ".beta", {c}, b.beta);
  add(refs, prefix + ".running_mean", {c}, b.running_mean);
  add(refs, prefix + ".running_var", {c}, b.running_var);
}

void add_layer(std::vector<TensorRef>& refs, const std::string& prefix, repnet::RepLayer& l) {
  if (auto* conv = std::get_if<repnet::ConvParams>(&l.params)) {
    add_conv(refs, prefix + ".conv", *conv);
    return;
  }
  auto& b = std::get<repnet::RepBlockParams>(l.params);
  add_conv(refs, prefix + ".conv3", b.conv3);
  add_bn(refs, prefix + ".bn3", b.bn3);
  add_conv(refs, prefix + ".conv1", b.conv1);
  add_bn(refs, prefix + ".bn1", b.bn1);
  if (b.bn_id) add_bn(refs, prefix + ".bn_id", *b.bn_id);
}

std::vector<TensorRef> tensor_refs(ModelParams& p) {
  std::vector<TensorRef> refs;
  for (std::size_t i = 0; i < p.mape.encode.size(); ++i) {
    auto& L = p.mape.encode[i];
    const std::string pre = "mape.encode" + std::to_string(i);
    add(refs, pre + ".weight", {L.weight.rows, L.weight.cols}, L.weight.data);
    add(refs, pre + ".bias", {L.out_dim()}, L.bias);
    if (L.normalize) {
      add(refs, pre + ".gamma", {L.out_dim()}, L.gamma);
      add(refs, pre + ".beta", {L.out_dim()}, L.beta);
      add(refs, pre + ".running_mean", {L.out_dim()}, L.running_mean);
      add(refs, pre + ".running_var", {L.out_dim()}, L.running_var);
    }
  }
  add(refs, "mape.score.weight", {p.mape.score_weight.rows, p.mape.score_weight.cols},
      p.mape.score_weight.data);
  add(refs, "mape.score.bias", {p.mape.width()}, p.mape.score_bias);
  add_layer(refs, "backbone.stem", p.backbone.stem);
  for (int s = 0; s < repnet::kStages; ++s) {
    for (std::size_t i = 0; i < p.backbone.stages[s].size(); ++i) {
      add_layer(refs, "backbone.stage" + std::to_string(s + 1) + "." + std::to_string(i),
                p.backbone.stages[s][i]);
    }
  }
  add_conv(refs, "neck.proj_fine", p.neck.proj_fine);
  add_conv(refs, "neck.proj_coarse", p.neck.proj_coarse);
  add_conv(refs, "neck.fuse", p.neck.fuse);
  add_conv(refs, "head.shared", p.head.shared);
  add_conv(refs, "head.heatmap", p.head.heatmap);
  add_conv(refs, "head.offset", p.head.offset);
  add_conv(refs, "head.z", p.head.z);
  add_conv(refs, "head.size", p.head.size);
  add_conv(refs, "head.yaw", p.head.yaw);
  add_conv(refs, "head.iou", p.head.iou);
  return refs;
}

json config_to_json(const ModelConfig& c) {
  return json{{"stage_blocks", c.backbone.stage_blocks},
              {"stage_channels", c.backbone.stage_channels},
              {"in_channels", c.backbone.in_channels},
              {"mape_layers", c.mape_layers},
              {"neck_channels", c.neck_channels},
              {"classes", c.classes}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.backbone.stage_blocks = j.at("stage_blocks").get<std::array<int, 4>>();
    c.backbone.stage_channels = j.at("stage_channels").get<std::array<int, 4>>();
    c.backbone.in_channels = j.at("in_channels").get<int>();
    c.mape_layers = j.at("mape_layers").get<int>();
    c.neck_channels = j.at("neck_channels").get<int>();
    c.classes = j.at("classes").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, "checkpoint config: ", e.what());
  }
  c.validate();
  return c;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& manifest) {
  params.validate();
  ModelParams copy = params;
  const auto refs = tensor_refs(copy);
  std::filesystem::path blob = manifest;
  blob.replace_extension(".bin");

  json tensors = json::array();
  std::uint64_t offset = 0;
  std::ofstream out(blob, std::ios::binary);
  PD_CHECK(out.good(), ErrorCode::kIo, "cannot write ", blob.string());
  for (const auto& r : refs) {
    const char* data = r.f32 ? reinterpret_cast<const char*>(r.f32)
                             : reinterpret_cast<const char*>(r.f64);
    out.write(data, static_cast<std::streamsize>(r.nbytes()));
    tensors.push_back({{"name", r.name},
                       {"shape", r.shape},
                       {"dtype", r.f32 ? "f32" : "f64"},
                       {"offset", offset},
                       {"nbytes", r.nbytes()}});
    offset += r.nbytes();
  }
  out.close();
  PD_CHECK(out.good(), ErrorCode::kIo, "failed writing ", blob.string());

  const json m{{"format", kFormat},
               {"version", kVersion},
               {"mode", params.fused() ? "fused" : "train"},
               {"config", config_to_json(params.config)},
               {"blob", blob.filename().string()},
               {"tensors", tensors}};
  std::ofstream mo(manifest);
  PD_CHECK(mo.good(), ErrorCode::kIo, "cannot write ", manifest.string());
  mo << m.dump(1) << "\n";
  PD_CHECK(mo.good(), ErrorCode::kIo, "failed writing ", manifest.string());
}

ModelParams load_checkpoint(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  PD_CHECK(in.good(), ErrorCode::kIo, "cannot open checkpoint ", manifest.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, "checkpoint manifest ", manifest.string(), ": ", e.what());
  }
  PD_CHECK(m.is_object() && m.value("format", "") == kFormat, ErrorCode::kParse,
           "checkpoint manifest has no '", kFormat, "' format tag");
  PD_CHECK(m.value("version", -1) == kVersion, ErrorCode::kParse,
           "unsupported checkpoint version");
  const std::string mode = m.value("mode", "");
  PD_CHECK(mode == "train" || mode == "fused", ErrorCode::kParse, "checkpoint mode '", mode,
           "' is neither train nor fused");
  PD_CHECK(m.contains("config") && m.contains("blob") && m["blob"].is_string() &&
               m.contains("tensors") && m["tensors"].is_array(),
           ErrorCode::kParse, "checkpoint manifest lacks config, blob or tensors");

  const ModelConfig cfg = config_from_json(m["config"]);
  ModelParams p = init_model(cfg, repnet::InitKind::kNeutral, 0);
  if (mode == "fused") p = fuse_model(p);

  const auto blob_path = manifest.parent_path() / m["blob"].get<std::string>();
  std::ifstream bin(blob_path, std::ios::binary);
  PD_CHECK(bin.good(), ErrorCode::kIo, "cannot open checkpoint blob ", blob_path.string());
  const std::vector<char> blob((std::istreambuf_iterator<char>(bin)),
                               std::istreambuf_iterator<char>());

  auto refs = tensor_refs(p);
  const json& tensors = m["tensors"];
  PD_CHECK(tensors.size() == refs.size(), ErrorCode::kParse, "checkpoint lists ",
           tensors.size(), " tensors, the architecture needs ", refs.size());
  std::uint64_t expected_offset = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& r = refs[i];
    const json& t = tensors[i];
    try {
      PD_CHECK(t.at("name").get<std::string>() == r.name, ErrorCode::kParse, "tensor ", i,
               " is '", t.at("name").get<std::string>(), "', expected '", r.name, "'");
      PD_CHECK(t.at("shape").get<std::vector<int>>() == r.shape, ErrorCode::kParse, "tensor '",
               r.name, "' has the wrong shape");
      PD_CHECK(t.at("dtype").get<std::string>() == (r.f32 ? "f32" : "f64"), ErrorCode::kParse,
               "tensor '", r.name, "' has the wrong dtype");
      const auto offset = t.at("offset").get<std::uint64_t>();
      const auto nbytes = t.at("nbytes").get<std::uint64_t>();
      PD_CHECK(offset == expected_offset && nbytes == r.nbytes() &&
                   offset + nbytes <= blob.size(),
               ErrorCode::kParse, "tensor '", r.name, "' has an inconsistent blob extent");
      std::memcpy(r.f32 ? static_cast<void*>(r.f32) : static_cast<void*>(r.f64),
                  blob.data() + offset, nbytes);
      expected_offset += nbytes;
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, "checkpoint tensor ", i, ": ", e.what());
    }
  }
  PD_CHECK(expected_offset == blob.size(), ErrorCode::kParse, "checkpoint blob has ",
           blob.size(), " bytes, manifest accounts for ", expected_offset);
  p.validate();
  return p;
}

}  // namespace pillardet::model

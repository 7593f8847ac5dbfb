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

// Command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pillardet/pillardet.h"

namespace {

using nlohmann::json;

constexpr double kFuseBound = 1e-4;

/// Thrown to unwind with a process exit code.
struct Exit {
  int code;
};

int exit_code_for(pd_status s) {
  return (s == PD_ERR_INVARIANT || s == PD_ERR_INTERNAL) ? 2 : 1;
}

void check(pd_status s, const std::string& what) {
  if (s == PD_OK) return;
  std::cerr << "error: " << what << ": " << pd_last_error() << " [" << pd_status_name(s)
            << "]\n";
  throw Exit{exit_code_for(s)};
}

struct Str {
  char* p = nullptr;
  ~Str() { pd_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() { Free(p); }
};
using Profile = Handle<pd_profile, pd_profile_free>;
using Cloud = Handle<pd_cloud, pd_cloud_free>;
using Model = Handle<pd_model, pd_model_free>;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot open " << path << "\n";
    throw Exit{1};
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Globals {
  std::string profile = "waymo";
  std::string config;
  std::uint64_t seed = 0;
  std::string format = "text";
  std::string out;
};

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) {
        std::cerr << "error: cannot write " << path << "\n";
        throw Exit{1};
      }
    }
  }
  std::ostream& os() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

void load_profile(const Globals& g, Profile& p) {
  check(pd_profile_load(g.profile.c_str(), g.config.empty() ? nullptr : g.config.c_str(), &p.p),
        "profile");
}

std::vector<json> parse_lines(const std::string& text) {
  std::vector<json> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(json::parse(line));
  }
  return rows;
}

void emit_records(std::ostream& os, const std::string& format, const std::vector<json>& rows,
                  const std::vector<std::string>& columns) {
  if (format == "json-lines") {
    for (const auto& r : rows) os << r.dump() << "\n";
    return;
  }
  const char* sep = format == "csv" ? "," : " ";
  for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? sep : "") << columns[i];
  os << "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      os << (i ? sep : "");
      const json& v = r.at(columns[i]);
      if (v.is_string()) {
        os << v.get<std::string>();
      } else {
        os << v.dump();
      }
    }
    os << "\n";
  }
}

const std::vector<std::string> kDetectionColumns = {
    "cx", "cy", "cz", "l", "w", "h", "yaw", "class", "cls_score", "iou_score", "final_score"};

// ---- subcommands ----------------------------------------------------------

struct GenerateArgs {
  int objects = 5;
  int points_per_object = 100;
  int background = 1000;
  int classes = 3;
  std::vector<double> range;
  std::string planted;
  std::string boxes_out;
};

void cmd_generate(const Globals& g, const GenerateArgs& a) {
  if (g.out.empty()) {
    std::cerr << "error: generate needs --out for the cloud file\n";
    throw Exit{1};
  }
  json spec{{"num_objects", a.objects},
            {"points_per_object", a.points_per_object},
            {"background_points", a.background},
            {"num_classes", a.classes}};
  if (!a.range.empty()) spec["range"] = a.range;
  if (!a.planted.empty()) spec["planted"] = parse_lines(read_file(a.planted));
  Cloud cloud;
  Str boxes;
  check(pd_generate(spec.dump().c_str(), g.seed, &cloud.p, &boxes.p), "generate");
  check(pd_cloud_save(cloud.p, g.out.c_str()), "save cloud");
  const std::string boxes_path = a.boxes_out.empty() ? g.out + ".boxes.jsonl" : a.boxes_out;
  std::ofstream bo(boxes_path);
  bo << boxes.str();
  std::cout << "wrote " << pd_cloud_size(cloud.p) << " points to " << g.out << " and "
            << parse_lines(boxes.str()).size() << " boxes to " << boxes_path << "\n";
}

void cmd_pillarize(const Globals& g, const std::string& cloud_path, bool records) {
  Profile prof;
  load_profile(g, prof);
  Cloud cloud;
  check(pd_cloud_load(cloud_path.c_str(), &cloud.p), "load cloud");
  Str out;
  check(pd_pillarize(cloud.p, prof.p, records ? 1 : 0, &out.p), "pillarize");
  const json j = json::parse(out.str());
  Output o(g.out);
  if (g.format == "json-lines") {
    o.os() << j.dump() << "\n";
  } else if (g.format == "csv") {
    o.os() << "min,max,count\n";
    for (const auto& h : j["histogram"]) o.os() << h["min"] << "," << h["max"] << "," << h["count"] << "\n";
  } else {
    o.os() << "points " << j["points"] << "\npillars " << j["pillars"] << "\ngrid "
           << j["grid"][0] << " x " << j["grid"][1] << "\n";
    for (const auto& h : j["histogram"]) {
      o.os() << "  " << h["min"] << "-" << h["max"] << " points: " << h["count"] << "\n";
    }
    if (j.contains("records")) {
      for (const auto& r : j["records"]) o.os() << r[0] << " " << r[1] << " " << r[2] << "\n";
    }
  }
}

void cmd_init(const Globals& g, const std::string& kind) {
  if (g.out.empty()) {
    std::cerr << "error: init-checkpoint needs --out\n";
    throw Exit{1};
  }
  Profile prof;
  load_profile(g, prof);
  Model m;
  check(pd_model_init(prof.p, kind == "neutral" ? 1 : 0, g.seed, &m.p), "init");
  check(pd_model_save(m.p, g.out.c_str()), "save checkpoint");
  std::cout << "wrote " << kind << " checkpoint " << g.out << "\n";
}

void cmd_encode(const Globals& g, const std::string& cloud_path, const std::string& ckpt) {
  Profile prof;
  load_profile(g, prof);
  Cloud cloud;
  check(pd_cloud_load(cloud_path.c_str(), &cloud.p), "load cloud");
  Model m;
  check(pd_model_load(ckpt.c_str(), &m.p), "load checkpoint");
  Str out;
  check(pd_encode(cloud.p, m.p, prof.p, &out.p), "encode");
  Output o(g.out);
  const auto rows = parse_lines(out.str());
  if (g.format == "json-lines") {
    o.os() << out.str();
    return;
  }
  const char* sep = g.format == "csv" ? "," : " ";
  for (const auto& r : rows) {
    o.os() << r["ix"] << sep << r["iy"] << sep << r["points"];
    for (const auto& v : r["feature"]) o.os() << sep << v.get<double>();
    o.os() << "\n";
  }
}

void cmd_fuse(const Globals& g, const std::string& in, int probes) {
  if (g.out.empty()) {
    std::cerr << "error: fuse needs --out for the fused checkpoint\n";
    throw Exit{1};
  }
  Model train;
  check(pd_model_load(in.c_str(), &train.p), "load checkpoint");
  Model fused;
  double disc = 0.0;
  check(pd_model_fuse(train.p, probes, g.seed, &fused.p, &disc), "fuse");
  check(pd_model_save(fused.p, g.out.c_str()), "save checkpoint");
  const bool ok = disc < kFuseBound;
  if (g.format == "json-lines") {
    std::cout << json{{"probes", probes}, {"max_discrepancy", disc}, {"bound", kFuseBound},
                      {"ok", ok}}.dump()
              << "\n";
  } else if (g.format == "csv") {
    std::cout << "probes,max_discrepancy,bound,ok\n"
              << probes << "," << disc << "," << kFuseBound << "," << (ok ? 1 : 0) << "\n";
  } else {
    std::cout << "fused " << in << " -> " << g.out << "\nprobes " << probes
              << "\nmax relative discrepancy " << disc << " (bound " << kFuseBound << ")\n";
  }
  if (!ok) {
    std::cerr << "error: fused model deviates from the train-mode model by " << disc << "\n";
    throw Exit{2};
  }
}

std::vector<std::array<int, 4>> parse_ratios(const std::vector<std::string>& specs) {
  std::vector<std::array<int, 4>> out;
  for (const auto& s : specs) {
    std::array<int, 4> r{};
    char c1, c2, c3;
    std::istringstream in(s);
    if (!(in >> r[0] >> c1 >> r[1] >> c2 >> r[2] >> c3 >> r[3]) || c1 != ',' || c2 != ',' ||
        c3 != ',') {
      std::cerr << "error: ratio '" << s << "' is not of the form a,b,c,d\n";
      throw Exit{1};
    }
    out.push_back(r);
  }
  return out;
}

std::string ratio_str(const json& r) {
  return "(" + r[0].dump() + "," + r[1].dump() + "," + r[2].dump() + "," + r[3].dump() + ")";
}

void cmd_flops(const Globals& g, const std::vector<std::string>& ratio_specs,
               const std::vector<int>& grid) {
  Profile prof;
  load_profile(g, prof);
  auto ratios = parse_ratios(ratio_specs);
  if (ratios.empty()) {
    ratios = {{2, 2, 2, 2}, {4, 2, 2, 2}, {2, 4, 2, 2}, {2, 2, 4, 2},
              {2, 2, 2, 4}, {3, 4, 6, 3}, {6, 6, 3, 1}};
  }
  std::vector<int> flat;
  for (const auto& r : ratios) flat.insert(flat.end(), r.begin(), r.end());
  const int h = grid.size() == 2 ? grid[0] : 0;
  const int w = grid.size() == 2 ? grid[1] : 0;
  Str out;
  check(pd_flops(prof.p, flat.data(), ratios.size(), h, w, &out.p), "flops");
  const json j = json::parse(out.str());
  const auto& rows = j["rows"];
  auto g_of = [](const json& v) { return v.get<double>() / 1e9; };
  const double base = g_of(rows[0]["total"]);

  Output o(g.out);
  auto& os = o.os();
  if (g.format == "json-lines") {
    for (const auto& r : rows) os << r.dump() << "\n";
    return;
  }
  if (g.format == "csv") {
    os << "ratios,total_gmacs,delta_gmacs,train_gmacs,params\n";
    for (const auto& r : rows) {
      os << "\"" << ratio_str(r["ratios"]) << "\"," << g_of(r["total"]) << ","
         << g_of(r["total"]) - base << "," << g_of(r["train_total"]) << "," << r["params"]
         << "\n";
    }
    return;
  }
  os << std::fixed << std::setprecision(2);
  os << "canvas " << j["in_h"] << " x " << j["in_w"] << " (fused backbone MACs)\n";
  os << std::left << std::setw(14) << "ratios" << std::right << std::setw(12) << "GMACs"
     << std::setw(12) << "delta" << std::setw(14) << "params(M)" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(14) << ratio_str(r["ratios"]) << std::right << std::setw(12)
       << g_of(r["total"]) << std::setw(12) << g_of(r["total"]) - base << std::setw(14)
       << r["params"].get<double>() / 1e6 << "\n";
  }
  os << "slope per 2 blocks (GMACs):";
  for (const auto& v : j["per_block"]) os << " " << 2.0 * g_of(v);
  os << "\n";
  const json* a = nullptr;
  const json* b = nullptr;
  for (const auto& r : rows) {
    if (r["ratios"] == json{6, 6, 3, 1}) a = &r;
    if (r["ratios"] == json{3, 4, 6, 3}) b = &r;
  }
  if (a && b) {
    os << "(6,6,3,1) vs (3,4,6,3): " << g_of((*a)["total"]) << " vs " << g_of((*b)["total"])
       << ((*a)["total"] == (*b)["total"] ? " (equal)" : " (differ)") << "\n";
  }
}

void cmd_detect(const Globals& g, const std::string& cloud_path, const std::string& ckpt,
                const std::string& inject) {
  Profile prof;
  load_profile(g, prof);
  Cloud cloud;
  check(pd_cloud_load(cloud_path.c_str(), &cloud.p), "load cloud");
  Model m;
  if (ckpt.empty()) {
    check(pd_model_init(prof.p, 0, g.seed, &m.p), "init");
  } else {
    check(pd_model_load(ckpt.c_str(), &m.p), "load checkpoint");
  }
  const std::string boxes = inject.empty() ? std::string() : read_file(inject);
  Str dets, report;
  check(pd_detect(cloud.p, m.p, prof.p, inject.empty() ? nullptr : boxes.c_str(), &dets.p,
                  &report.p),
        "detect");
  Output o(g.out);
  const std::string fmt = g.format == "text" && !g.out.empty() ? "json-lines" : g.format;
  emit_records(o.os(), fmt, parse_lines(dets.str()), kDetectionColumns);
  std::cerr << report.str() << "\n";
}

void cmd_bench(const Globals& g, const std::string& ckpt, int points, int repeats) {
  Profile prof;
  load_profile(g, prof);
  Model m;
  if (ckpt.empty()) {
    check(pd_model_init(prof.p, 0, g.seed, &m.p), "init");
  } else {
    check(pd_model_load(ckpt.c_str(), &m.p), "load checkpoint");
  }
  Str out;
  check(pd_bench(m.p, prof.p, points, repeats, g.seed, &out.p), "bench");
  const json rows = json::parse(out.str());
  Output o(g.out);
  const std::string fmt = g.format == "text" ? "csv" : g.format;
  emit_records(o.os(), fmt, std::vector<json>(rows.begin(), rows.end()),
               {"stage", "p50", "p90", "mean"});
}

void cmd_train_step(const Globals& g, const std::string& cloud_path, const std::string& ckpt,
                    const std::string& boxes_path, double lr) {
  Profile prof;
  load_profile(g, prof);
  Cloud cloud;
  check(pd_cloud_load(cloud_path.c_str(), &cloud.p), "load cloud");
  Model m;
  if (ckpt.empty()) {
    check(pd_model_init(prof.p, 0, g.seed, &m.p), "init");
  } else {
    check(pd_model_load(ckpt.c_str(), &m.p), "load checkpoint");
  }
  const std::string boxes = read_file(boxes_path);
  Str out;
  check(pd_train_step(cloud.p, m.p, prof.p, boxes.c_str(), lr, &out.p), "train-step");
  const json j = json::parse(out.str());
  Output o(g.out);
  auto& os = o.os();
  if (g.format == "json-lines") {
    os << j.dump() << "\n";
    return;
  }
  if (g.format == "csv") {
    os << "phase,cls,iou,diou,reg,total\n";
    for (const char* ph : {"before", "after"}) {
      const auto& p = j[ph];
      os << ph << "," << p["cls"] << "," << p["iou"] << "," << p["diou"] << "," << p["reg"]
         << "," << j[std::string(ph) == "before" ? "total" : "total_after"] << "\n";
    }
    return;
  }
  os << "objects " << j["objects"] << "\nweights cls=" << j["weights"][0]
     << " iou=" << j["weights"][1] << " reg=" << j["weights"][2] << "\n";
  for (const char* ph : {"before", "after"}) {
    const auto& p = j[ph];
    os << ph << ": cls " << p["cls"] << "  iou " << p["iou"] << "  diou " << p["diou"]
       << "  reg " << p["reg"] << "  total "
       << j[std::string(ph) == "before" ? "total" : "total_after"] << "\n";
  }
  os << "step lr " << j["lr"] << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pillardet: pillar-based LiDAR detection toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--profile", g.profile, "Built-in profile (waymo, nuscenes)")
      ->check(CLI::IsMember({"waymo", "nuscenes"}));
  app.add_option("--config", g.config, "JSON file overriding profile fields");
  app.add_option("--seed", g.seed, "Seed for every random draw");
  app.add_option("--format", g.format, "Output format")
      ->check(CLI::IsMember({"text", "csv", "json-lines"}));
  app.add_option("--out", g.out, "Output path (stdout when omitted)");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic scene");
  generate->add_option("--objects", gen.objects, "Number of random objects");
  generate->add_option("--points-per-object", gen.points_per_object);
  generate->add_option("--background", gen.background, "Ground points");
  generate->add_option("--classes", gen.classes);
  generate->add_option("--range", gen.range, "x0 x1 y0 y1 z0 z1")->expected(6);
  generate->add_option("--planted", gen.planted, "JSON-lines boxes placed verbatim");
  generate->add_option("--boxes", gen.boxes_out, "Box file (default <out>.boxes.jsonl)");

  std::string cloud_path, ckpt, inject, boxes_path, kind = "random", fuse_in;
  bool records = false;
  int probes = 8, points = 20000, repeats = 5;
  double lr = 1e-3;
  std::vector<std::string> ratio_specs;
  std::vector<int> grid;

  auto* pillarize = app.add_subcommand("pillarize", "Group a cloud into pillars");
  pillarize->add_option("cloud", cloud_path)->required();
  pillarize->add_flag("--records", records, "Include per-pillar records");

  auto* init = app.add_subcommand("init-checkpoint", "Write a fresh train-mode checkpoint");
  init->add_option("--kind", kind)->check(CLI::IsMember({"random", "neutral"}));

  auto* encode = app.add_subcommand("encode", "Per-pillar MAPE features");
  encode->add_option("cloud", cloud_path)->required();
  encode->add_option("--checkpoint", ckpt)->required();

  auto* fuse = app.add_subcommand("fuse", "Fuse a train-mode checkpoint");
  fuse->add_option("checkpoint", fuse_in)->required();
  fuse->add_option("--probes", probes)->check(CLI::PositiveNumber);

  auto* flops = app.add_subcommand("flops", "Backbone MAC table for stage ratios");
  flops->add_option("--ratios", ratio_specs, "Stage block counts a,b,c,d (repeatable)");
  flops->add_option("--grid", grid, "Canvas H W (default: profile grid)")->expected(2);

  auto* det = app.add_subcommand("detect", "Run the detector on a cloud");
  det->add_option("cloud", cloud_path)->required();
  det->add_option("--checkpoint", ckpt, "Checkpoint (random init when omitted)");
  det->add_option("--inject-boxes", inject, "Bypass the network with these boxes");

  auto* bench = app.add_subcommand("bench", "Per-stage latency");
  bench->add_option("--checkpoint", ckpt);
  bench->add_option("--points", points)->check(CLI::NonNegativeNumber);
  bench->add_option("--repeats", repeats)->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train-step", "Loss breakdown and one gradient step");
  train->add_option("cloud", cloud_path)->required();
  train->add_option("--boxes", boxes_path)->required();
  train->add_option("--checkpoint", ckpt);
  train->add_option("--lr", lr);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*generate) cmd_generate(g, gen);
    if (*pillarize) cmd_pillarize(g, cloud_path, records);
    if (*init) cmd_init(g, kind);
    if (*encode) cmd_encode(g, cloud_path, ckpt);
    if (*fuse) cmd_fuse(g, fuse_in, probes);
    if (*flops) cmd_flops(g, ratio_specs, grid);
    if (*det) cmd_detect(g, cloud_path, ckpt, inject);
    if (*bench) cmd_bench(g, ckpt, points, repeats);
    if (*train) cmd_train_step(g, cloud_path, ckpt, boxes_path, lr);
  } catch (const Exit& e) {
    return e.code;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed input: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

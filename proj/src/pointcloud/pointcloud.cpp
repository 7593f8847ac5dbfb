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

#include "pointcloud/pointcloud.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

namespace pillardet::pointcloud {

namespace {

using json = nlohmann::json;

std::uint32_t load_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_le32(unsigned char* p, std::uint32_t v) {
  p[0] = static_cast<unsigned char>(v & 0xffu);
  p[1] = static_cast<unsigned char>((v >> 8) & 0xffu);
  p[2] = static_cast<unsigned char>((v >> 16) & 0xffu);
  p[3] = static_cast<unsigned char>((v >> 24) & 0xffu);
}

json range_to_json(const Range3D& r) {
  return json{{"x_min", r.x_min}, {"x_max", r.x_max}, {"y_min", r.y_min},
              {"y_max", r.y_max}, {"z_min", r.z_min}, {"z_max", r.z_max}};
}

Range3D range_from_json(const json& j) {
  Range3D r;
  r.x_min = j.at("x_min").get<double>();
  r.x_max = j.at("x_max").get<double>();
  r.y_min = j.at("y_min").get<double>();
  r.y_max = j.at("y_max").get<double>();
  r.z_min = j.at("z_min").get<double>();
  r.z_max = j.at("z_max").get<double>();
  return r;
}

Point make_point(double x, double y, double z, float r, float t) {
  return Point{static_cast<float>(x), static_cast<float>(y), static_cast<float>(z), r, t};
}

}  // namespace

std::filesystem::path metadata_path(const std::filesystem::path& cloud_path) {
  return std::filesystem::path(cloud_path.string() + ".meta.json");
}

PointCloud load_cloud(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  PD_CHECK(in.good(), ErrorCode::kIo, "cannot open point cloud '", path.string(), "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  PD_CHECK(!in.bad(), ErrorCode::kIo, "read failed for '", path.string(), "'");
  PD_CHECK(bytes.size() % kRecordBytes == 0, ErrorCode::kParse, "point cloud '", path.string(),
           "' has ", bytes.size(), " bytes, not a multiple of the ", kRecordBytes,
           "-byte record size");

  PointCloud cloud;
  const std::size_t n = bytes.size() / kRecordBytes;
  cloud.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::array<float, kRecordFields> v{};
    for (std::size_t f = 0; f < kRecordFields; ++f) {
      v[f] = std::bit_cast<float>(load_le32(bytes.data() + i * kRecordBytes + f * 4));
    }
    Point p{v[0], v[1], v[2], v[3], v[4]};
    PD_CHECK(p.finite(), ErrorCode::kParse, "non-finite value in record ", i);
    cloud.points[i] = p;
  }

  const auto meta = metadata_path(path);
  if (std::filesystem::exists(meta)) {
    std::ifstream min(meta);
    PD_CHECK(min.good(), ErrorCode::kIo, "cannot open metadata '", meta.string(), "'");
    json j;
    try {
      j = json::parse(min);
      const auto count = j.at("record_count").get<std::size_t>();
      PD_CHECK(count == n, ErrorCode::kParse, "metadata declares ", count,
               " records but the file holds ", n);
      if (j.contains("declared_range") && !j.at("declared_range").is_null()) {
        cloud.declared_range = range_from_json(j.at("declared_range"));
        cloud.declared_range->validate();
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, "malformed metadata '", meta.string(), "': ", e.what());
    }
  }
  return cloud;
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(cloud.points.size() * kRecordBytes);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Point& p = cloud.points[i];
    PD_CHECK(p.finite(), ErrorCode::kInvalidArgument, "non-finite value in point ", i);
    const std::array<float, kRecordFields> v{p.x, p.y, p.z, p.r, p.t};
    for (std::size_t f = 0; f < kRecordFields; ++f) {
      store_le32(bytes.data() + i * kRecordBytes + f * 4, std::bit_cast<std::uint32_t>(v[f]));
    }
  }
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    PD_CHECK(out.good(), ErrorCode::kIo, "cannot write '", path.string(), "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    PD_CHECK(out.good(), ErrorCode::kIo, "write failed for '", path.string(), "'");
  }
  json meta{{"format", "xyzrt-f32le"},
            {"record_count", cloud.points.size()},
            {"fields", {"x", "y", "z", "r", "t"}},
            {"declared_range", cloud.declared_range ? range_to_json(*cloud.declared_range)
                                                    : json(nullptr)}};
  std::ofstream mout(metadata_path(path), std::ios::trunc);
  PD_CHECK(mout.good(), ErrorCode::kIo, "cannot write metadata for '", path.string(), "'");
  mout << meta.dump(2) << "\n";
}

PointCloud crop_to_range(const PointCloud& cloud, const Range3D& range) {
  range.validate();
  PointCloud out;
  out.declared_range = range;
  out.points.reserve(cloud.points.size());
  for (const Point& p : cloud.points) {
    if (range.contains(p.x, p.y, p.z)) out.points.push_back(p);
  }
  return out;
}

void AugmentSpec::validate() const {
  constexpr double kQuarterPi = std::numbers::pi / 4.0;
  // The bound itself is rounded when written to text; allow one part in 1e12.
  constexpr double kSlack = 1e-12;
  PD_CHECK(flip_x_prob >= 0.0 && flip_x_prob <= 1.0 && flip_y_prob >= 0.0 && flip_y_prob <= 1.0,
           ErrorCode::kInvalidArgument, "flip probabilities must lie in [0, 1]");
  PD_CHECK(rot_min <= rot_max && rot_min >= -kQuarterPi - kSlack && rot_max <= kQuarterPi + kSlack,
           ErrorCode::kInvalidArgument, "rotation interval must lie within [-pi/4, pi/4]");
  for (int a = 0; a < 3; ++a) {
    PD_CHECK(trans_min[a] <= trans_max[a] && trans_min[a] >= -0.5 && trans_max[a] <= 0.5,
             ErrorCode::kInvalidArgument, "translation interval on axis ", a,
             " must lie within [-0.5, 0.5] m");
  }
  PD_CHECK(scale_min <= scale_max && scale_min >= 0.95 && scale_max <= 1.05,
           ErrorCode::kInvalidArgument, "scale interval must lie within [0.95, 1.05]");
}

AugmentDraw draw_augmentation(const AugmentSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo == hi ? lo : lo + (hi - lo) * unit(rng); };

  AugmentDraw d;
  // Draw every variable unconditionally so the stream layout is fixed.
  const double ux = unit(rng);
  const double uy = unit(rng);
  d.flip_x = ux < spec.flip_x_prob;
  d.flip_y = uy < spec.flip_y_prob;
  d.rotation = between(spec.rot_min, spec.rot_max);
  for (int a = 0; a < 3; ++a) d.translation[a] = between(spec.trans_min[a], spec.trans_max[a]);
  d.scale = between(spec.scale_min, spec.scale_max);
  return d;
}

namespace {

struct Xyz {
  double x, y, z;
};

Xyz transform_xyz(Xyz p, const AugmentDraw& d, double c, double s) {
  if (d.flip_x) p.y = -p.y;
  if (d.flip_y) p.x = -p.x;
  const double rx = c * p.x - s * p.y;
  const double ry = s * p.x + c * p.y;
  p.x = rx + d.translation[0];
  p.y = ry + d.translation[1];
  p.z = p.z + d.translation[2];
  p.x *= d.scale;
  p.y *= d.scale;
  p.z *= d.scale;
  return p;
}

}  // namespace

Box3D transform_box(const Box3D& box, const AugmentDraw& d) {
  const double c = std::cos(d.rotation);
  const double s = std::sin(d.rotation);
  const Xyz center = transform_xyz({box.cx, box.cy, box.cz}, d, c, s);
  Box3D out = box;
  out.cx = center.x;
  out.cy = center.y;
  out.cz = center.z;
  double yaw = box.yaw;
  if (d.flip_x) yaw = -yaw;
  if (d.flip_y) yaw = std::numbers::pi - yaw;
  out.yaw = normalize_yaw(yaw + d.rotation);
  out.l = box.l * d.scale;
  out.w = box.w * d.scale;
  out.h = box.h * d.scale;
  return out;
}

Scene augment_global(const PointCloud& cloud, std::span<const Box3D> boxes,
                     const AugmentSpec& spec, std::uint64_t seed) {
  const AugmentDraw d = draw_augmentation(spec, seed);
  const double c = std::cos(d.rotation);
  const double s = std::sin(d.rotation);

  Scene out;
  out.cloud.points.reserve(cloud.points.size());
  for (const Point& p : cloud.points) {
    const Xyz q = transform_xyz({p.x, p.y, p.z}, d, c, s);
    out.cloud.points.push_back(make_point(q.x, q.y, q.z, p.r, p.t));
  }
  out.boxes.reserve(boxes.size());
  for (const Box3D& b : boxes) out.boxes.push_back(transform_box(b, d));
  return out;
}

double box_signed_distance(double x, double y, double z, const Box3D& box) {
  const double dx = x - box.cx;
  const double dy = y - box.cy;
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  // Coordinates in the box frame.
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  const double w = z - box.cz;
  const double qx = std::abs(u) - box.l / 2.0;
  const double qy = std::abs(v) - box.w / 2.0;
  const double qz = std::abs(w) - box.h / 2.0;
  const double outside = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0), std::max(qz, 0.0));
  const double inside = std::min(std::max({qx, qy, qz}), 0.0);
  return outside + inside;
}

void SceneSpec::validate() const {
  range.validate();
  PD_CHECK(num_objects >= 0 && points_per_object >= 1 && background_points >= 0,
           ErrorCode::kInvalidArgument,
           "scene needs num_objects >= 0, points_per_object >= 1, background_points >= 0");
  PD_CHECK(num_classes >= 1, ErrorCode::kInvalidArgument, "scene needs at least one class");
  PD_CHECK(length_min > 0 && length_min <= length_max && width_min > 0 &&
               width_min <= width_max && height_min > 0 && height_min <= height_max,
           ErrorCode::kInvalidArgument, "object size ranges must be positive and ordered");
  PD_CHECK(noise >= 0.0 && std::isfinite(noise), ErrorCode::kInvalidArgument,
           "noise must be a finite non-negative number");
}

namespace {

bool footprint_inside(const Box3D& b, const Range3D& r) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      const double u = sx * b.l / 2.0, v = sy * b.w / 2.0;
      const double x = b.cx + c * u - s * v;
      const double y = b.cy + s * u + c * v;
      if (!(x >= r.x_min && x < r.x_max && y >= r.y_min && y < r.y_max)) return false;
    }
  }
  return b.cz - b.h / 2.0 >= r.z_min && b.cz + b.h / 2.0 < r.z_max;
}

}  // namespace

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const Range3D& r = spec.range;

  Scene scene;
  scene.cloud.declared_range = r;

  if (!spec.planted.empty()) {
    for (std::size_t i = 0; i < spec.planted.size(); ++i) {
      const Box3D& b = spec.planted[i];
      b.validate();
      PD_CHECK(footprint_inside(b, r), ErrorCode::kInvalidArgument, "planted box ", i,
               " does not fit inside the scene range");
      PD_CHECK(b.class_id >= 0 && b.class_id < spec.num_classes, ErrorCode::kInvalidArgument,
               "planted box ", i, " has class ", b.class_id, " outside [0, ", spec.num_classes,
               ")");
      Box3D nb = b;
      nb.yaw = normalize_yaw(b.yaw);
      scene.boxes.push_back(nb);
    }
  } else {
    const double max_radius = std::hypot(spec.length_max, spec.width_max) / 2.0;
    PD_CHECK(2.0 * max_radius < (r.x_max - r.x_min) && 2.0 * max_radius < (r.y_max - r.y_min) &&
                 spec.ground_z >= r.z_min && spec.ground_z + spec.height_max < r.z_max,
             ErrorCode::kInvalidArgument, "objects cannot fit inside the scene range");
    constexpr int kAttempts = 2000;
    for (int k = 0; k < spec.num_objects; ++k) {
      bool placed = false;
      for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
        Box3D b;
        b.l = between(spec.length_min, spec.length_max);
        b.w = between(spec.width_min, spec.width_max);
        b.h = between(spec.height_min, spec.height_max);
        b.yaw = normalize_yaw(between(-std::numbers::pi, std::numbers::pi));
        const double rad = std::hypot(b.l, b.w) / 2.0;
        b.cx = between(r.x_min + rad, r.x_max - rad);
        b.cy = between(r.y_min + rad, r.y_max - rad);
        b.cz = spec.ground_z + b.h / 2.0;
        b.class_id = static_cast<int>(unit(rng) * spec.num_classes) % spec.num_classes;
        if (!footprint_inside(b, r)) continue;
        bool clear = true;
        for (const Box3D& o : scene.boxes) {
          const double ro = std::hypot(o.l, o.w) / 2.0;
          if (std::hypot(o.cx - b.cx, o.cy - b.cy) < rad + ro + 0.1) {
            clear = false;
            break;
          }
        }
        if (clear) {
          scene.boxes.push_back(b);
          placed = true;
        }
      }
      PD_CHECK(placed, ErrorCode::kInvalidArgument, "could not place object ", k,
               " without overlap; the scene spec is infeasible");
    }
  }

  // Interior samples use a slightly shrunken box so float rounding cannot push
  // a point onto the surface.
  constexpr double kShrink = 0.98;
  for (const Box3D& b : scene.boxes) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    for (int i = 0; i < spec.points_per_object; ++i) {
      const double u = between(-0.5, 0.5) * b.l * kShrink;
      const double v = between(-0.5, 0.5) * b.w * kShrink;
      const double w = between(-0.5, 0.5) * b.h * kShrink;
      const auto refl = static_cast<float>(between(0.2, 1.0));
      scene.cloud.points.push_back(
          make_point(b.cx + c * u - s * v, b.cy + s * u + c * v, b.cz + w, refl, 0.f));
    }
  }

  std::normal_distribution<double> jitter(0.0, 1.0);
  for (int i = 0; i < spec.background_points; ++i) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double x = between(r.x_min, r.x_max);
      const double y = between(r.y_min, r.y_max);
      double z = spec.ground_z + spec.noise * jitter(rng);
      z = std::clamp(z, r.z_min, std::nextafter(r.z_max, r.z_min));
      const Point p = make_point(x, y, z, static_cast<float>(between(0.0, 0.3)), 0.f);
      if (!r.contains(p.x, p.y, p.z)) continue;
      bool inside = false;
      for (const Box3D& b : scene.boxes) {
        if (box_signed_distance(p.x, p.y, p.z, b) < 0.05) {
          inside = true;
          break;
        }
      }
      if (!inside) {
        scene.cloud.points.push_back(p);
        break;
      }
    }
  }
  return scene;
}

}  // namespace pillardet::pointcloud

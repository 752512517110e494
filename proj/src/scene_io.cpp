// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#include "nmvs/scene_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace nmvs {

namespace {

constexpr double kGoldenAngle = 2.39996322972865332;
const Eigen::Vector3f kBackground(0.2f, 0.2f, 0.2f);
const Eigen::Vector3f kCheckerA(0.92f, 0.78f, 0.35f);
const Eigen::Vector3f kCheckerB(0.16f, 0.24f, 0.52f);

CameraPose look_at(const Eigen::Vector3d& position, const Eigen::Vector3d& target,
                   const Eigen::Vector3d& up) {
  Eigen::Vector3d f = (target - position).normalized();
  Eigen::Vector3d side = f.cross(up);
  if (side.norm() < 1e-6) side = f.cross(Eigen::Vector3d::UnitX());
  side.normalize();
  CameraPose pose;
  pose.rotation.col(0) = side;
  pose.rotation.col(1) = f.cross(side);  // image-down axis, opposite world up
  pose.rotation.col(2) = f;
  pose.translation = position;
  return pose;
}

std::string view_image_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "images/view_%03d.png", i);
  return buf;
}

std::string view_depth_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "depth_gt/view_%03d.pfm", i);
  return buf;
}

/// Symmetric-reflection pad to the next multiple of `mult`, shifting the
/// principal point by the left/top margins.
void pad_view(SceneView& view, int mult) {
  const int W = view.image.width, H = view.image.height;
  const int pw = (mult - W % mult) % mult, ph = (mult - H % mult) % mult;
  if (!pw && !ph) return;
  const int left = pw / 2, top = ph / 2;
  const int W2 = W + pw, H2 = H + ph;
  Image padded;
  padded.width = W2;
  padded.height = H2;
  padded.channels = view.image.channels;
  padded.data.resize(view.image.channels, Eigen::Index(W2) * H2);
  auto reflect = [](int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return i;
  };
  for (int y = 0; y < H2; ++y)
    for (int x = 0; x < W2; ++x)
      padded.data.col(Eigen::Index(y) * W2 + x) =
          view.image.data.col(Eigen::Index(reflect(y - top, H)) * W + reflect(x - left, W));
  view.image = std::move(padded);
  view.intrinsics.cx += left;
  view.intrinsics.cy += top;
  view.intrinsics.width = W2;
  view.intrinsics.height = H2;
}

/// Auto split (every 8th view is held out) and the bounding-sphere transform
/// used to normalize positional-encoding inputs.
void finalize_dataset(SceneDataset& ds) {
  if (ds.train_indices.empty() && ds.test_indices.empty()) {
    for (int i = 0; i < int(ds.views.size()); ++i)
      (i % 8 == 0 ? ds.test_indices : ds.train_indices).push_back(i);
  }
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& v : ds.views) centroid += v.pose.translation;
  centroid /= double(ds.views.size());
  double reach = 0;
  for (const auto& v : ds.views)
    reach = std::max(reach, (v.pose.translation - centroid).norm());
  ds.norm_center = centroid;
  ds.norm_radius = reach + ds.far;
}

}  // namespace

const char* to_string(ToyPrimitive p) {
  switch (p) {
    case ToyPrimitive::kSphere: return "sphere";
    case ToyPrimitive::kPlane: return "plane";
    case ToyPrimitive::kTwoSpheres: return "two-spheres";
  }
  return "?";
}

std::optional<ToyPrimitive> toy_primitive_from_string(const std::string& s) {
  if (s == "sphere") return ToyPrimitive::kSphere;
  if (s == "plane") return ToyPrimitive::kPlane;
  if (s == "two-spheres") return ToyPrimitive::kTwoSpheres;
  return std::nullopt;
}

void ToySceneSpec::validate() const {
  if (width % 8 || height % 8 || width <= 0 || height <= 0)
    throw std::invalid_argument("toy scene: resolution must be divisible by 8");
  if (num_views < 4) throw std::invalid_argument("toy scene: need at least 4 views");
  if (!(checker_cell > 0)) throw std::invalid_argument("toy scene: checker cell must be positive");
}

double ToyGeometry::raycast(const Eigen::Vector3d& o, const Eigen::Vector3d& d) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : spheres) {
    const Eigen::Vector3d oc = o - s.center;
    const double b = oc.dot(d);
    const double disc = b * b - (oc.squaredNorm() - s.radius * s.radius);
    if (disc < 0) continue;
    const double sq = std::sqrt(disc);
    for (double t : {-b - sq, -b + sq})
      if (t > 1e-9 && t < best) best = t;
  }
  if (has_quad) {
    const double denom = d.dot(quad_normal);
    if (std::abs(denom) > 1e-12) {
      const double t = (quad_origin - o).dot(quad_normal) / denom;
      if (t > 1e-9 && t < best) {
        const Eigen::Vector3d p = o + t * d - quad_origin;
        if (std::abs(p.dot(quad_u)) <= quad_half_u && std::abs(p.dot(quad_v)) <= quad_half_v)
          best = t;
      }
    }
  }
  return best;
}

double ToyGeometry::sdf(const Eigen::Vector3d& x) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : spheres) best = std::min(best, (x - s.center).norm() - s.radius);
  if (has_quad) {
    const Eigen::Vector3d p = x - quad_origin;
    const double du = std::max(std::abs(p.dot(quad_u)) - quad_half_u, 0.0);
    const double dv = std::max(std::abs(p.dot(quad_v)) - quad_half_v, 0.0);
    const double dn = p.dot(quad_normal);
    best = std::min(best, std::sqrt(du * du + dv * dv + dn * dn));
  }
  return best;
}

Eigen::Vector3f ToyGeometry::color(const Eigen::Vector3d& x) const {
  long parity = 0;
  for (int d = 0; d < 3; ++d)
    parity += long(std::floor((x(d) - checker_phase(d)) / checker_cell));
  return (parity & 1) ? kCheckerB : kCheckerA;
}

StepOracle ToyGeometry::sdf_step() const {
  return [geo = *this](const Eigen::Vector3d& x, const Eigen::Vector3d&, double) {
    return geo.sdf(x);
  };
}

StepOracle ToyGeometry::ray_step() const {
  return [geo = *this](const Eigen::Vector3d& x, const Eigen::Vector3d& d, double t) {
    const Eigen::Vector3d o = x - t * d;
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](double root) {
      if (std::abs(root - t) < std::abs(best - t)) best = root;
    };
    for (const auto& s : geo.spheres) {
      const Eigen::Vector3d oc = o - s.center;
      const double b = oc.dot(d);
      const double disc = b * b - (oc.squaredNorm() - s.radius * s.radius);
      if (disc < 0) continue;
      const double sq = std::sqrt(disc);
      consider(-b - sq);
      consider(-b + sq);
    }
    if (geo.has_quad) {
      const double denom = d.dot(geo.quad_normal);
      if (std::abs(denom) > 1e-12) {
        const double root = (geo.quad_origin - o).dot(geo.quad_normal) / denom;
        const Eigen::Vector3d p = o + root * d - geo.quad_origin;
        if (std::abs(p.dot(geo.quad_u)) <= geo.quad_half_u &&
            std::abs(p.dot(geo.quad_v)) <= geo.quad_half_v)
          consider(root);
      }
    }
    return std::isfinite(best) ? best - t : geo.sdf(x);
  };
}

ToyGeometry make_toy_geometry(const ToySceneSpec& spec) {
  ToyGeometry geo;
  geo.checker_cell = spec.checker_cell;
  std::mt19937 rng(spec.seed ^ 0x9e3779b9u);
  std::uniform_real_distribution<double> phase(0.0, spec.checker_cell);
  for (int d = 0; d < 3; ++d) geo.checker_phase(d) = phase(rng);

  switch (spec.primitive) {
    case ToyPrimitive::kSphere:
      geo.spheres.push_back({Eigen::Vector3d::Zero(), 1.0});
      break;
    case ToyPrimitive::kTwoSpheres:
      geo.spheres.push_back({{-0.6, 0.0, 0.0}, 0.6});
      geo.spheres.push_back({{0.6, 0.15, 0.25}, 0.6});
      break;
    case ToyPrimitive::kPlane:
      geo.has_quad = true;
      if (spec.configuration == ViewConfiguration::kHemisphere) {
        geo.quad_origin = Eigen::Vector3d::Zero();
        geo.quad_normal = Eigen::Vector3d::UnitY();
        geo.quad_u = Eigen::Vector3d::UnitX();
        geo.quad_v = Eigen::Vector3d::UnitZ();
      } else {
        geo.quad_origin = Eigen::Vector3d::Zero();
        geo.quad_normal = -Eigen::Vector3d::UnitZ();
        geo.quad_u = Eigen::Vector3d::UnitX();
        geo.quad_v = Eigen::Vector3d::UnitY();
      }
      geo.quad_half_u = geo.quad_half_v = 1.6;
      break;
  }
  return geo;
}

std::vector<CameraPose> make_toy_cameras(const ToySceneSpec& spec) {
  std::mt19937 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<CameraPose> poses;
  const Eigen::Vector3d up = Eigen::Vector3d::UnitY();

  if (spec.configuration == ViewConfiguration::kHemisphere) {
    // Fibonacci spiral over the upper hemisphere, radius ~3, all looking at
    // the origin.
    for (int i = 0; i < spec.num_views; ++i) {
      const double u = (i + 0.5) / spec.num_views;
      const double cos_theta = 0.25 + 0.62 * u;
      const double sin_theta = std::sqrt(1.0 - cos_theta * cos_theta);
      const double phi = i * kGoldenAngle + 0.02 * unit(rng);
      const double r = 3.0 * (1.0 + 0.02 * unit(rng));
      const Eigen::Vector3d pos(r * sin_theta * std::cos(phi), r * cos_theta,
                                r * sin_theta * std::sin(phi));
      poses.push_back(look_at(pos, Eigen::Vector3d::Zero(), up));
    }
  } else {
    // Grid on the z = -3 plane; positions stay exactly coplanar so the
    // configuration classifier sees zero residual.
    const int g = int(std::ceil(std::sqrt(double(spec.num_views))));
    const double span = 2.4;
    for (int i = 0; i < spec.num_views; ++i) {
      const int gx = i % g, gy = i / g;
      const double step = g > 1 ? span / (g - 1) : 0.0;
      const double x = -span / 2 + gx * step + 0.03 * unit(rng);
      const double y = -span / 2 + gy * step + 0.03 * unit(rng);
      poses.push_back(look_at({x, y, -3.0}, Eigen::Vector3d::Zero(), up));
    }
  }
  return poses;
}

SceneDataset generate_toy_scene(const ToySceneSpec& spec, const std::string& out_dir) {
  spec.validate();
  const ToyGeometry geo = make_toy_geometry(spec);
  const auto poses = make_toy_cameras(spec);

  CameraIntrinsics K;
  K.width = spec.width;
  K.height = spec.height;
  constexpr double kFovX = 0.9;  // radians
  K.fx = K.fy = 0.5 * spec.width / std::tan(0.5 * kFovX);
  K.cx = spec.width / 2.0;
  K.cy = spec.height / 2.0;

  const Eigen::Index N = Eigen::Index(spec.width) * spec.height;
  std::vector<Eigen::MatrixXf> depths(poses.size());
  std::vector<Image> images(poses.size());
  double min_hit = std::numeric_limits<double>::infinity(), max_hit = 0;

  for (size_t v = 0; v < poses.size(); ++v) {
    const RayBundle<double> rays = generate_rays<double>(K, poses[v], 1);
    depths[v].resize(1, N);
    images[v] = Image{spec.width, spec.height, 3, Eigen::MatrixXf(3, N)};
    for (Eigen::Index p = 0; p < N; ++p) {
      const Eigen::Vector3d d = rays.directions.col(p);
      const double t = geo.raycast(rays.origin, d);
      if (std::isfinite(t)) {
        depths[v](0, p) = float(t);
        images[v].data.col(p) = geo.color(rays.origin + t * d);
        min_hit = std::min(min_hit, t);
        max_hit = std::max(max_hit, t);
      } else {
        depths[v](0, p) = -1.f;  // replaced by the far sentinel below
        images[v].data.col(p) = kBackground;
      }
    }
  }
  if (!std::isfinite(min_hit))
    throw std::runtime_error("toy scene: no camera sees the geometry");

  SceneDataset ds;
  ds.near = 0.9 * min_hit;
  ds.far = 1.1 * max_hit;
  for (size_t v = 0; v < poses.size(); ++v) {
    for (Eigen::Index p = 0; p < N; ++p)
      if (depths[v](0, p) < 0) depths[v](0, p) = float(ds.far);
    SceneView view;
    view.image = std::move(images[v]);
    view.intrinsics = K;
    view.pose = poses[v];
    view.file = view_image_name(int(v));
    ds.views.push_back(std::move(view));
  }

  save_native(ds, out_dir);
  fs::create_directories(fs::path(out_dir) / "depth_gt");
  for (size_t v = 0; v < poses.size(); ++v)
    write_pfm((fs::path(out_dir) / view_depth_name(int(v))).string(), depths[v], spec.width,
              spec.height);
  return load_native(out_dir);
}

void save_native(const SceneDataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  json views = json::array();
  for (size_t i = 0; i < ds.views.size(); ++i) {
    const SceneView& v = ds.views[i];
    const std::string file = v.file.empty() ? view_image_name(int(i)) : v.file;
    json pose = json::array();
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = v.pose.rotation;
    m.topRightCorner<3, 1>() = v.pose.translation;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) pose.push_back(m(r, c));
    views.push_back({{"file", file},
                     {"fx", v.intrinsics.fx},
                     {"fy", v.intrinsics.fy},
                     {"cx", v.intrinsics.cx},
                     {"cy", v.intrinsics.cy},
                     {"pose", pose}});
    write_png((fs::path(dir) / file).string(), v.image);
  }
  json root = {{"near", ds.near}, {"far", ds.far}, {"views", views}};
  std::ofstream out(fs::path(dir) / "cameras.json");
  out << root.dump(2) << "\n";
  if (!out) throw std::runtime_error("save_native: cannot write cameras.json");
}

SceneDataset load_native(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream in(root / "cameras.json");
  if (!in) throw std::runtime_error("load_native: missing " + (root / "cameras.json").string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::runtime_error("load_native: cannot parse cameras.json: " + std::string(e.what()));
  }

  SceneDataset ds;
  try {
    ds.near = doc.at("near").get<double>();
    ds.far = doc.at("far").get<double>();
    for (const auto& jv : doc.at("views")) {
      SceneView v;
      v.file = jv.at("file").get<std::string>();
      v.intrinsics.fx = jv.at("fx").get<double>();
      v.intrinsics.fy = jv.at("fy").get<double>();
      v.intrinsics.cx = jv.at("cx").get<double>();
      v.intrinsics.cy = jv.at("cy").get<double>();
      const auto& pose = jv.at("pose");
      if (pose.size() != 16)
        throw std::runtime_error("load_native: pose must hold 16 row-major floats");
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) v.pose.rotation(r, c) = pose[4 * r + c].get<double>();
        v.pose.translation(r) = pose[4 * r + 3].get<double>();
      }
      ds.views.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("load_native: malformed cameras.json: " + std::string(e.what()));
  }

  if (ds.views.size() < 4) throw std::runtime_error("load_native: need at least 4 views");
  if (!(ds.near < ds.far)) throw std::runtime_error("load_native: near must be below far");

  for (auto& v : ds.views) {
    v.pose.validate(1e-4);
    v.image = read_png((root / v.file).string());
    v.intrinsics.width = v.image.width;
    v.intrinsics.height = v.image.height;
    v.intrinsics.validate();
    pad_view(v, 8);
  }
  const int W = ds.views.front().image.width, H = ds.views.front().image.height;
  for (const auto& v : ds.views)
    if (v.image.width != W || v.image.height != H)
      throw std::runtime_error("load_native: views disagree on resolution");

  finalize_dataset(ds);
  return ds;
}

SceneDataset load_nerf_synthetic(const std::string& dir, const std::string& split) {
  const fs::path root(dir);
  const fs::path file = root / ("transforms_" + split + ".json");
  std::ifstream in(file);
  if (!in) throw std::runtime_error("load_nerf_synthetic: missing " + file.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::runtime_error("load_nerf_synthetic: cannot parse " + file.string() + ": " +
                             e.what());
  }

  SceneDataset ds;
  // The public dataset convention places the blender scenes within [2, 6].
  ds.near = 2.0;
  ds.far = 6.0;
  try {
    const double angle_x = doc.at("camera_angle_x").get<double>();
    for (const auto& jf : doc.at("frames")) {
      SceneView v;
      v.file = jf.at("file_path").get<std::string>() + ".png";
      v.image = read_png((root / v.file).lexically_normal().string());
      const auto& m = jf.at("transform_matrix");
      Eigen::Matrix3d R;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) R(r, c) = m.at(r).at(c).get<double>();
        v.pose.translation(r) = m.at(r).at(3).get<double>();
      }
      // Dataset axes are x right / y up / z backward; flip to y down / z forward.
      v.pose.rotation = R;
      v.pose.rotation.col(1) *= -1.0;
      v.pose.rotation.col(2) *= -1.0;
      v.pose.validate(1e-4);
      v.intrinsics.width = v.image.width;
      v.intrinsics.height = v.image.height;
      v.intrinsics.fx = v.intrinsics.fy = 0.5 * v.image.width / std::tan(0.5 * angle_x);
      v.intrinsics.cx = v.image.width / 2.0;
      v.intrinsics.cy = v.image.height / 2.0;
      v.intrinsics.validate();
      pad_view(v, 8);
      ds.views.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("load_nerf_synthetic: malformed " + file.string() + ": " + e.what());
  }
  if (ds.views.empty()) throw std::runtime_error("load_nerf_synthetic: no frames in " + file.string());

  for (int i = 0; i < int(ds.views.size()); ++i)
    (split == "test" ? ds.test_indices : ds.train_indices).push_back(i);
  finalize_dataset(ds);
  return ds;
}

void write_render(const RenderOutput& out, const std::string& out_dir, const std::string& name) {
  fs::create_directories(out_dir);
  const fs::path root(out_dir);
  Image color{out.width, out.height, 3, out.color};
  write_png((root / (name + "_color.png")).string(), color);
  write_pfm((root / (name + "_depth.pfm")).string(), out.depth, out.width, out.height);
  Image conf{out.width, out.height, 1, out.confidence};
  write_png((root / (name + "_conf.png")).string(), conf);
}

Eigen::MatrixXf load_toy_depth(const std::string& dir, int view_index, int& width, int& height) {
  return read_pfm((fs::path(dir) / view_depth_name(view_index)).string(), width, height);
}

}  // namespace nmvs

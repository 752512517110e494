// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nmvs/camera.hpp"
#include "nmvs/image.hpp"
#include "nmvs/renderer.hpp"
#include "nmvs/view_select.hpp"

// Dataset loading (native cameras.json and NeRF-synthetic transforms.json),
// toy-scene generation against an analytic ray tracer, and render output.

namespace nmvs {

struct SceneView {
  Image image;
  CameraIntrinsics intrinsics;
  CameraPose pose;
  std::string file;
};

struct SceneDataset {
  std::vector<SceneView> views;
  double near = 0, far = 0;
  std::vector<int> train_indices, test_indices;
  // Bounding-sphere normalization for positional encoding.
  Vec3<double> norm_center = Vec3<double>::Zero();
  double norm_radius = 1;

  std::vector<Eigen::Vector3d> centers() const {
    std::vector<Eigen::Vector3d> c;
    c.reserve(views.size());
    for (const auto& v : views) c.push_back(v.pose.translation);
    return c;
  }
  bool is_test(int index) const {
    for (int t : test_indices)
      if (t == index) return true;
    return false;
  }
};

enum class ToyPrimitive { kSphere, kPlane, kTwoSpheres };

const char* to_string(ToyPrimitive p);
std::optional<ToyPrimitive> toy_primitive_from_string(const std::string& s);

struct ToySceneSpec {
  ToyPrimitive primitive = ToyPrimitive::kSphere;
  double checker_cell = 0.35;
  int num_views = 20;
  ViewConfiguration configuration = ViewConfiguration::kHemisphere;
  int width = 64, height = 64;
  std::uint32_t seed = 0;

  void validate() const;
};

/// Analytic geometry behind a toy scene; the ground-truth oracle for both
/// image generation and sphere-tracing tests.
struct ToyGeometry {
  struct Sphere {
    Eigen::Vector3d center;
    double radius;
  };
  std::vector<Sphere> spheres;
  // Finite checkered quad: point + unit normal + in-plane half extents.
  bool has_quad = false;
  Eigen::Vector3d quad_origin, quad_normal, quad_u, quad_v;
  double quad_half_u = 0, quad_half_v = 0;
  double checker_cell = 0.35;
  Eigen::Vector3d checker_phase = Eigen::Vector3d::Zero();

  /// Distance to the closest hit along a unit-direction ray; +infinity on miss.
  double raycast(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const;
  /// Signed distance to the nearest surface.
  double sdf(const Eigen::Vector3d& x) const;
  /// Unlit checkerboard color at a surface point.
  Eigen::Vector3f color(const Eigen::Vector3d& x) const;

  /// Classic sphere-tracing step: the SDF at the current sample.
  StepOracle sdf_step() const;
  /// Ray-aware analytic step: signed distance along the ray to its nearest
  /// intersection, falling back to the SDF when the ray misses. Robust to
  /// samples that the coarse-to-fine upsampling places beyond the surface.
  StepOracle ray_step() const;
};

ToyGeometry make_toy_geometry(const ToySceneSpec& spec);

/// Deterministic camera rig for a toy scene (before image rendering).
std::vector<CameraPose> make_toy_cameras(const ToySceneSpec& spec);

/// Renders the toy scene, writes images/, cameras.json and depth_gt/ PFMs
/// under out_dir, and returns the loaded dataset.
SceneDataset generate_toy_scene(const ToySceneSpec& spec, const std::string& out_dir);

/// cameras.json schema:
/// {"near": f, "far": f, "views": [{"file": str, "fx": f, "fy": f, "cx": f,
///  "cy": f, "pose": [16 floats, row-major camera-to-world]}, ...]}
SceneDataset load_native(const std::string& dir);
void save_native(const SceneDataset& dataset, const std::string& dir);

/// NeRF-synthetic transforms_{split}.json; split is "train" or "test".
/// Dataset camera axes (x right, y up, z backward) are converted to the
/// internal x-right / y-down / z-forward convention by negating the y and z
/// basis columns.
SceneDataset load_nerf_synthetic(const std::string& dir, const std::string& split);

/// {name}_color.png, {name}_depth.pfm, {name}_conf.png under out_dir.
void write_render(const RenderOutput& output, const std::string& out_dir,
                  const std::string& name);

/// Ground-truth depth map of view i of a toy scene directory.
Eigen::MatrixXf load_toy_depth(const std::string& dir, int view_index, int& width, int& height);

}  // namespace nmvs

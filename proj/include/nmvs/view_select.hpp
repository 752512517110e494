// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

// Working-set selection: Delaunay triangulation of the projected camera
// positions, plus the proximity baseline.

namespace nmvs {

enum class ViewConfiguration { kHemisphere, kFrontoParallel };

inline const char* to_string(ViewConfiguration c) {
  return c == ViewConfiguration::kHemisphere ? "hemisphere" : "fronto-parallel";
}

struct Triangle {
  std::array<int, 3> v;
};

/// Projection of the camera constellation onto the triangulation plane.
/// Kept so that query points (target poses) can be mapped consistently.
struct PlaneProjection {
  ViewConfiguration configuration = ViewConfiguration::kFrontoParallel;
  // Plane (orthographic case): point + orthonormal in-plane basis.
  Eigen::Vector3d plane_origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d basis_u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d basis_v = Eigen::Vector3d::UnitY();
  // Sphere (stereographic case).
  Eigen::Vector3d sphere_center = Eigen::Vector3d::Zero();
  double sphere_radius = 0;
  Eigen::Vector3d pole = Eigen::Vector3d::Zero();        // projective singularity
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();       // center -> tangent point
  bool stereographic = false;

  Eigen::Vector2d map(const Eigen::Vector3d& x) const;
};

struct ViewConstellation {
  std::vector<Eigen::Vector3d> centers;
  ViewConfiguration configuration = ViewConfiguration::kFrontoParallel;
  std::vector<Eigen::Vector2d> projected;
  std::vector<Triangle> triangles;
  PlaneProjection projection;
};

struct WorkingSet {
  std::array<int, 3> view_ids{};
  std::array<double, 3> weights{};  // barycentric, nonnegative, sum 1
};

/// Fraction of the constellation diameter below which the camera centers are
/// considered coplanar (fronto-parallel capture).
inline constexpr double kPlaneTau = 0.05;

/// Least-squares-plane residual test over >= 4 camera centers.
ViewConfiguration classify_configuration(const std::vector<Eigen::Vector3d>& centers);

/// Maps camera centers to the 2D triangulation domain. Hemisphere rigs are
/// stereographically projected from the pole antipodal to the mean camera
/// direction; a degenerate sphere fit falls back to orthographic projection
/// with a warning on stderr.
PlaneProjection fit_projection(const std::vector<Eigen::Vector3d>& centers,
                               ViewConfiguration configuration);

std::vector<Eigen::Vector2d> project_to_plane(const std::vector<Eigen::Vector3d>& centers,
                                              const PlaneProjection& projection);

/// Delaunay triangulation (Bowyer-Watson). Throws if all points are collinear.
std::vector<Triangle> triangulate(const std::vector<Eigen::Vector2d>& points);

/// Builds the full constellation. Three views form a single triangle and are
/// treated as fronto-parallel (three points are always coplanar).
ViewConstellation build_constellation(const std::vector<Eigen::Vector3d>& centers);

/// Containment-first triangle choice, then minimum point-to-triangle
/// distance; ties broken by lowest triangle index. Weights are the target's
/// barycentric coordinates clamped to >= 0 and renormalized.
WorkingSet select_working_set(const ViewConstellation& constellation,
                              const Eigen::Vector3d& target_center);

/// Ablation baseline: three nearest centers, inverse-distance weights.
WorkingSet select_proximity(const std::vector<Eigen::Vector3d>& centers,
                            const Eigen::Vector3d& target_center);

/// Barycentric coordinates of p in triangle (a, b, c).
Eigen::Vector3d barycentric_2d(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                               const Eigen::Vector2d& b, const Eigen::Vector2d& c);

double point_triangle_distance_2d(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                                  const Eigen::Vector2d& b, const Eigen::Vector2d& c);

}  // namespace nmvs

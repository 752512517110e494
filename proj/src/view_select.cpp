// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#include "nmvs/view_select.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace nmvs {

namespace {

double constellation_diameter(const std::vector<Eigen::Vector3d>& centers) {
  double d = 0;
  for (size_t i = 0; i < centers.size(); ++i)
    for (size_t j = i + 1; j < centers.size(); ++j)
      d = std::max(d, (centers[i] - centers[j]).norm());
  return d;
}

struct PlaneFit {
  Eigen::Vector3d origin;
  Eigen::Vector3d normal;
  double max_residual;
};

PlaneFit fit_plane(const std::vector<Eigen::Vector3d>& centers) {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& c : centers) mean += c;
  mean /= double(centers.size());
  Eigen::MatrixXd centered(3, centers.size());
  for (size_t i = 0; i < centers.size(); ++i) centered.col(i) = centers[i] - mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeFullU);
  Eigen::Vector3d normal = svd.matrixU().col(2);
  double max_res = 0;
  for (const auto& c : centers) max_res = std::max(max_res, std::abs(normal.dot(c - mean)));
  return {mean, normal, max_res};
}

/// Algebraic sphere fit: |x|^2 = 2 c.x - k with k = |c|^2 - R^2.
bool fit_sphere(const std::vector<Eigen::Vector3d>& centers, Eigen::Vector3d& center,
                double& radius) {
  const size_t n = centers.size();
  Eigen::MatrixXd A(n, 4);
  Eigen::VectorXd b(n);
  for (size_t i = 0; i < n; ++i) {
    A.row(i) << 2 * centers[i].x(), 2 * centers[i].y(), 2 * centers[i].z(), -1.0;
    b(i) = centers[i].squaredNorm();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues()(3) < 1e-9 * svd.singularValues()(0)) return false;
  Eigen::Vector4d sol = svd.solve(b);
  center = sol.head<3>();
  const double r2 = center.squaredNorm() - sol(3);
  if (!(r2 > 1e-12)) return false;
  radius = std::sqrt(r2);
  return true;
}

void orthonormal_basis(const Eigen::Vector3d& n, Eigen::Vector3d& u, Eigen::Vector3d& v) {
  const Eigen::Vector3d ref =
      std::abs(n.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  u = n.cross(ref).normalized();
  v = n.cross(u);
}

constexpr double kInsideEps = 1e-12;

}  // namespace

Eigen::Vector2d PlaneProjection::map(const Eigen::Vector3d& x) const {
  if (!stereographic) {
    const Eigen::Vector3d d = x - plane_origin;
    return {basis_u.dot(d), basis_v.dot(d)};
  }
  // Radially project onto the sphere, then cast a ray from the pole through
  // the point onto the equatorial plane orthogonal to `axis`.
  Eigen::Vector3d dir = x - sphere_center;
  const double len = dir.norm();
  if (len < 1e-12) return {0.0, 0.0};
  const Eigen::Vector3d on_sphere = sphere_center + sphere_radius * (dir / len);
  const double denom = (on_sphere - pole).dot(axis);
  // denom > 0 for every sphere point except the pole itself.
  const double s = denom > 1e-12 ? sphere_radius / denom : 0.0;
  const Eigen::Vector3d y = pole + s * (on_sphere - pole);
  const Eigen::Vector3d d = y - sphere_center;
  return {basis_u.dot(d), basis_v.dot(d)};
}

ViewConfiguration classify_configuration(const std::vector<Eigen::Vector3d>& centers) {
  if (centers.size() < 4)
    throw std::invalid_argument("classify_configuration: need at least 4 views");
  const PlaneFit fit = fit_plane(centers);
  const double diameter = constellation_diameter(centers);
  return fit.max_residual < kPlaneTau * diameter ? ViewConfiguration::kFrontoParallel
                                                 : ViewConfiguration::kHemisphere;
}

PlaneProjection fit_projection(const std::vector<Eigen::Vector3d>& centers,
                               ViewConfiguration configuration) {
  PlaneProjection proj;
  proj.configuration = configuration;
  if (configuration == ViewConfiguration::kHemisphere) {
    Eigen::Vector3d c;
    double R = 0;
    if (fit_sphere(centers, c, R)) {
      Eigen::Vector3d mean = Eigen::Vector3d::Zero();
      for (const auto& x : centers) mean += x;
      mean /= double(centers.size());
      Eigen::Vector3d axis = mean - c;
      if (axis.norm() < 1e-12) axis = Eigen::Vector3d::UnitZ();
      axis.normalize();
      proj.stereographic = true;
      proj.sphere_center = c;
      proj.sphere_radius = R;
      proj.axis = axis;
      proj.pole = c - R * axis;  // antipodal to the mean camera direction
      orthonormal_basis(axis, proj.basis_u, proj.basis_v);
      return proj;
    }
    std::fprintf(stderr,
                 "warning: degenerate sphere fit for hemisphere configuration; "
                 "falling back to orthographic projection\n");
  }
  const PlaneFit fit = fit_plane(centers);
  proj.stereographic = false;
  proj.plane_origin = fit.origin;
  orthonormal_basis(fit.normal, proj.basis_u, proj.basis_v);
  return proj;
}

std::vector<Eigen::Vector2d> project_to_plane(const std::vector<Eigen::Vector3d>& centers,
                                              const PlaneProjection& projection) {
  std::vector<Eigen::Vector2d> out(centers.size());
  for (size_t i = 0; i < centers.size(); ++i) out[i] = projection.map(centers[i]);
  return out;
}

std::vector<Triangle> triangulate(const std::vector<Eigen::Vector2d>& points) {
  const int n = int(points.size());
  if (n < 3) throw std::invalid_argument("triangulate: need at least 3 points");

  // Bowyer-Watson with a super-triangle; double predicates are adequate for
  // camera constellations (the brute-force incircle check runs in tests).
  Eigen::Vector2d lo = points[0], hi = points[0];
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double span = std::max({hi.x() - lo.x(), hi.y() - lo.y(), 1e-9});
  const Eigen::Vector2d mid = 0.5 * (lo + hi);
  std::vector<Eigen::Vector2d> pts = points;
  pts.push_back(mid + Eigen::Vector2d(0, 64 * span));
  pts.push_back(mid + Eigen::Vector2d(-64 * span, -32 * span));
  pts.push_back(mid + Eigen::Vector2d(64 * span, -32 * span));
  const int s0 = n, s1 = n + 1, s2 = n + 2;

  struct Tri {
    int a, b, c;
    Eigen::Vector2d cc;
    double r2;
  };
  auto make_tri = [&](int a, int b, int c) {
    Tri t{a, b, c, {0, 0}, std::numeric_limits<double>::infinity()};
    const Eigen::Vector2d A = pts[a], B = pts[b], C = pts[c];
    const double d = 2.0 * ((B - A).x() * (C - A).y() - (B - A).y() * (C - A).x());
    if (std::abs(d) > 1e-300) {
      const double b2 = (B - A).squaredNorm(), c2 = (C - A).squaredNorm();
      t.cc = A + Eigen::Vector2d(((C - A).y() * b2 - (B - A).y() * c2) / d,
                                 ((B - A).x() * c2 - (C - A).x() * b2) / d);
      t.r2 = (A - t.cc).squaredNorm();
    }
    return t;
  };

  std::vector<Tri> tris{make_tri(s0, s1, s2)};
  for (int p = 0; p < n; ++p) {
    std::vector<std::pair<int, int>> boundary;
    std::vector<Tri> keep;
    for (const Tri& t : tris) {
      if ((pts[p] - t.cc).squaredNorm() <= t.r2 * (1.0 + 1e-12)) {
        // Accumulate the cavity boundary; shared edges cancel out.
        const std::pair<int, int> edges[3] = {{t.a, t.b}, {t.b, t.c}, {t.c, t.a}};
        for (auto e : edges) {
          auto rev = std::find_if(boundary.begin(), boundary.end(), [&](auto x) {
            return x.first == e.second && x.second == e.first;
          });
          if (rev != boundary.end())
            boundary.erase(rev);
          else
            boundary.push_back(e);
        }
      } else {
        keep.push_back(t);
      }
    }
    tris = std::move(keep);
    for (auto e : boundary) tris.push_back(make_tri(e.first, e.second, p));
  }

  std::vector<Triangle> out;
  for (const Tri& t : tris) {
    if (t.a >= n || t.b >= n || t.c >= n) continue;
    std::array<int, 3> v{t.a, t.b, t.c};
    std::sort(v.begin(), v.end());
    // Drop degenerate slivers (collinear inputs produce none anyway).
    const Eigen::Vector2d e1 = pts[v[1]] - pts[v[0]], e2 = pts[v[2]] - pts[v[0]];
    if (std::abs(e1.x() * e2.y() - e1.y() * e2.x()) < 1e-14) continue;
    out.push_back({v});
  }
  std::sort(out.begin(), out.end(),
            [](const Triangle& x, const Triangle& y) { return x.v < y.v; });
  if (out.empty()) throw std::invalid_argument("triangulate: all points are collinear");
  return out;
}

ViewConstellation build_constellation(const std::vector<Eigen::Vector3d>& centers) {
  ViewConstellation con;
  con.centers = centers;
  con.configuration = centers.size() == 3 ? ViewConfiguration::kFrontoParallel
                                          : classify_configuration(centers);
  con.projection = fit_projection(centers, con.configuration);
  con.projected = project_to_plane(centers, con.projection);
  con.triangles = triangulate(con.projected);
  return con;
}

Eigen::Vector3d barycentric_2d(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                               const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  Eigen::Matrix2d M;
  M.col(0) = b - a;
  M.col(1) = c - a;
  const Eigen::Vector2d rhs = p - a;
  const Eigen::Vector2d st = M.fullPivLu().solve(rhs);
  return {1.0 - st.x() - st.y(), st.x(), st.y()};
}

double point_triangle_distance_2d(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                                  const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  const Eigen::Vector3d bc = barycentric_2d(p, a, b, c);
  if (bc.minCoeff() >= 0) return 0.0;
  auto seg = [&](const Eigen::Vector2d& u, const Eigen::Vector2d& v) {
    const Eigen::Vector2d d = v - u;
    const double len2 = d.squaredNorm();
    const double t = len2 > 0 ? std::clamp((p - u).dot(d) / len2, 0.0, 1.0) : 0.0;
    return (p - (u + t * d)).norm();
  };
  return std::min({seg(a, b), seg(b, c), seg(c, a)});
}

WorkingSet select_working_set(const ViewConstellation& con, const Eigen::Vector3d& target) {
  if (con.triangles.empty()) throw std::invalid_argument("select_working_set: no triangles");
  const Eigen::Vector2d p = con.projection.map(target);

  int best = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < con.triangles.size(); ++i) {
    const auto& t = con.triangles[i].v;
    const double d = point_triangle_distance_2d(p, con.projected[t[0]], con.projected[t[1]],
                                                con.projected[t[2]]);
    if (d <= kInsideEps) {
      best = int(i);  // containment-first, lowest index wins
      break;
    }
    if (d < best_dist) {
      best_dist = d;
      best = int(i);
    }
  }

  const auto& t = con.triangles[best].v;
  Eigen::Vector3d bc = barycentric_2d(p, con.projected[t[0]], con.projected[t[1]],
                                      con.projected[t[2]]);
  bc = bc.cwiseMax(0.0);
  const double sum = bc.sum();
  if (sum > 0)
    bc /= sum;
  else
    bc = Eigen::Vector3d::Constant(1.0 / 3.0);

  WorkingSet ws;
  ws.view_ids = {t[0], t[1], t[2]};
  ws.weights = {bc(0), bc(1), bc(2)};
  return ws;
}

WorkingSet select_proximity(const std::vector<Eigen::Vector3d>& centers,
                            const Eigen::Vector3d& target) {
  if (centers.size() < 3) throw std::invalid_argument("select_proximity: need at least 3 views");
  std::vector<std::pair<double, int>> dist(centers.size());
  for (size_t i = 0; i < centers.size(); ++i)
    dist[i] = {(centers[i] - target).norm(), int(i)};
  std::sort(dist.begin(), dist.end());

  WorkingSet ws;
  for (int k = 0; k < 3; ++k) ws.view_ids[k] = dist[k].second;
  // Inverse-distance weights; an exact hit takes all the weight.
  if (dist[0].first < 1e-12) {
    ws.weights = {1.0, 0.0, 0.0};
    return ws;
  }
  double sum = 0;
  for (int k = 0; k < 3; ++k) sum += 1.0 / dist[k].first;
  for (int k = 0; k < 3; ++k) ws.weights[k] = (1.0 / dist[k].first) / sum;
  return ws;
}

}  // namespace nmvs

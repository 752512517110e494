// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>

#include "nmvs/core/tape.hpp"

// Pinhole camera model. Convention: camera looks along +z in its own frame,
// x right, y down; poses are camera-to-world; pixel centers sit at integer
// coordinates.

namespace nmvs {

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
    if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
      throw std::invalid_argument("intrinsics: principal point outside the image");
  }

  /// Intrinsics of the level grid downsampled by `scale`.
  CameraIntrinsics scaled(int scale) const {
    if (scale < 1 || width % scale || height % scale)
      throw std::invalid_argument("intrinsics: scale must divide the resolution");
    return {fx / scale, fy / scale, cx / scale, cy / scale, width / scale, height / scale};
  }
};

struct CameraPose {
  Mat3<double> rotation = Mat3<double>::Identity();  // camera-to-world
  Vec3<double> translation = Vec3<double>::Zero();   // camera origin in world

  void validate(double tol = 1e-6) const {
    Mat3<double> err = rotation.transpose() * rotation - Mat3<double>::Identity();
    if (err.cwiseAbs().maxCoeff() > tol)
      throw std::invalid_argument("pose: rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > tol)
      throw std::invalid_argument("pose: rotation determinant is not +1");
  }
};

template <class T>
struct RayBundle {
  Vec3<T> origin;     // shared by all rays of a pinhole view
  Mat<T> directions;  // 3 x H*W, unit norm
  int height = 0, width = 0;
};

/// One ray per pixel of the grid downsampled by `scale` in {1, 2, 4, ...}.
template <class T>
RayBundle<T> generate_rays(const CameraIntrinsics& K, const CameraPose& pose, int scale = 1) {
  const CameraIntrinsics Ks = K.scaled(scale);
  RayBundle<T> rays;
  rays.height = Ks.height;
  rays.width = Ks.width;
  rays.origin = pose.translation.template cast<T>();
  rays.directions.resize(3, Eigen::Index(Ks.height) * Ks.width);
  const Mat3<T> R = pose.rotation.template cast<T>();
  for (int y = 0; y < Ks.height; ++y)
    for (int x = 0; x < Ks.width; ++x) {
      Vec3<T> d(T((x - Ks.cx) / Ks.fx), T((y - Ks.cy) / Ks.fy), T(1));
      rays.directions.col(Eigen::Index(y) * Ks.width + x) = (R * d).normalized();
    }
  return rays;
}

template <class T>
Vec3<T> point_at(const Vec3<T>& origin, const Vec3<T>& direction, T t) {
  return origin + t * direction;
}

constexpr double kZEps = 1e-5;  // perspective-divide guard near the camera plane

struct Projection {
  double u = 0, v = 0;
  bool in_frustum = false;
};

/// Projects a world point into a view. Out-of-frustum (behind the camera or
/// outside [0,width)x[0,height)) is reported via the flag, never an error.
inline Projection project_point(const Vec3<double>& x, const CameraIntrinsics& K,
                                const CameraPose& pose) {
  const Vec3<double> pc = pose.rotation.transpose() * (x - pose.translation);
  const double z = std::max(pc.z(), kZEps);
  Projection p;
  p.u = K.fx * pc.x() / z + K.cx;
  p.v = K.fy * pc.y() / z + K.cy;
  p.in_frustum = pc.z() > kZEps && p.u >= 0 && p.u < K.width && p.v >= 0 && p.v < K.height;
  return p;
}

/// Bilinear lookup on a plain (C x H*W) map, border-zero outside
/// [0, W-1] x [0, H-1]. Mirrors the differentiable op in core/spatial.hpp.
template <class T>
Vec<T> sample_bilinear(const Mat<T>& map, int H, int W, T u, T v) {
  if (!(u >= T(0) && u <= T(W - 1) && v >= T(0) && v <= T(H - 1)))
    return Vec<T>::Zero(map.rows());
  const int x0 = std::min(int(u), W - 2 < 0 ? 0 : W - 2);
  const int y0 = std::min(int(v), H - 2 < 0 ? 0 : H - 2);
  const T fx = u - T(x0), fy = v - T(y0);
  const int p00 = y0 * W + x0;
  const int p10 = p00 + (W > 1 ? 1 : 0);
  const int p01 = p00 + (H > 1 ? W : 0);
  const int p11 = p01 + (W > 1 ? 1 : 0);
  return (T(1) - fy) * ((T(1) - fx) * map.col(p00) + fx * map.col(p10)) +
         fy * ((T(1) - fx) * map.col(p01) + fx * map.col(p11));
}

namespace ad {

/// x = o + t*d for a bundle of rays; differentiable in the per-ray depth t
/// (1 x N). Origin and directions are fixed ray geometry.
template <class T>
Var<T> ray_points(Var<T> t, const RayBundle<T>& rays) {
  Tape<T>& tp = *t.tape;
  if (tp.val(t).rows() != 1 || tp.val(t).cols() != rays.directions.cols())
    throw std::invalid_argument("ray_points: t must be 1 x num_rays");
  Mat<T> y = rays.directions.array().rowwise() * tp.val(t).row(0).array();
  y.colwise() += rays.origin;
  Var<T> out = tp.make(std::move(y), tp.needs(t), rays.height, rays.width);
  if (tp.needs(out)) {
    auto dirs = std::make_shared<Mat<T>>(rays.directions);
    tp.set_backprop(out, [t, dirs, out](Tape<T>& tape) {
      tape.grad(t).row(0).array() +=
          (tape.grad_ref(out).array() * dirs->array()).colwise().sum();
    });
  }
  return out;
}

template <class T>
struct ProjectedPoints {
  Var<T> coords;  // 2 x N pixel coordinates (u; v)
  Mat<T> mask;    // 1 x N, 1 where in front of the camera and inside the image
};

/// Projects world points (3 x N) into a view; differentiable in the points.
/// The perspective divide clamps z to kZEps; the frustum test is reported in
/// a constant mask so out-of-frustum samples can be zeroed downstream.
template <class T>
ProjectedPoints<T> project_points(Var<T> x, const CameraIntrinsics& K, const CameraPose& pose) {
  Tape<T>& tp = *x.tape;
  const Eigen::Index N = tp.val(x).cols();
  const Mat3<T> Rt = pose.rotation.transpose().template cast<T>();
  const Vec3<T> o = pose.translation.template cast<T>();
  const T fx = T(K.fx), fy = T(K.fy), cx = T(K.cx), cy = T(K.cy);
  const T zeps = T(kZEps);

  auto pc = std::make_shared<Mat<T>>();  // camera-frame points, reused in backprop
  pc->noalias() = Rt * tp.val(x);
  pc->colwise() -= (Rt * o).eval();

  Mat<T> uv(2, N);
  Mat<T> mask(1, N);
  for (Eigen::Index q = 0; q < N; ++q) {
    const T z = std::max((*pc)(2, q), zeps);
    uv(0, q) = fx * (*pc)(0, q) / z + cx;
    uv(1, q) = fy * (*pc)(1, q) / z + cy;
    mask(0, q) = ((*pc)(2, q) > zeps && uv(0, q) >= T(0) && uv(0, q) < T(K.width) &&
                  uv(1, q) >= T(0) && uv(1, q) < T(K.height))
                     ? T(1)
                     : T(0);
  }
  Var<T> coords = tp.make(std::move(uv), tp.needs(x), tp.height(x), tp.width(x));
  if (tp.needs(coords)) {
    Mat3<T> R = pose.rotation.template cast<T>();
    tp.set_backprop(coords, [x, pc, R, fx, fy, zeps, coords](Tape<T>& tape) {
      const Mat<T>& g = tape.grad_ref(coords);
      Mat<T> dpc(3, g.cols());
      for (Eigen::Index q = 0; q < g.cols(); ++q) {
        const T zraw = (*pc)(2, q);
        const T z = std::max(zraw, zeps);
        const T iz = T(1) / z;
        dpc(0, q) = g(0, q) * fx * iz;
        dpc(1, q) = g(1, q) * fy * iz;
        dpc(2, q) = (zraw > zeps)
                        ? -iz * (g(0, q) * fx * (*pc)(0, q) + g(1, q) * fy * (*pc)(1, q)) * iz
                        : T(0);
      }
      tape.grad(x).noalias() += R * dpc;
    });
  }
  return {coords, std::move(mask)};
}

}  // namespace ad
}  // namespace nmvs

// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "nmvs/core/tape.hpp"

// Spatial tape operations on (channels x H*W) maps, pixel index p = y*W + x.

namespace nmvs::ad {

namespace detail {

/// Gathers shifted copies of x into offset-major im2col layout:
/// rows [k*C, (k+1)*C) hold the input shifted by the k-th 3x3 offset,
/// zero where the shift falls outside the image.
template <class T>
void im2col3x3(const Mat<T>& x, int H, int W, Mat<T>& col) {
  const Eigen::Index C = x.rows();
  col.setZero(9 * C, x.cols());
  int k = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx, ++k) {
      const int x_dst = std::max(0, -dx), x_src = std::max(0, dx);
      const int len = W - std::abs(dx);
      for (int y = 0; y < H; ++y) {
        const int ys = y + dy;
        if (ys < 0 || ys >= H) continue;
        col.block(k * C, y * W + x_dst, C, len) = x.block(0, ys * W + x_src, C, len);
      }
    }
  }
}

/// Transpose of im2col3x3: scatters column gradients back onto the input.
template <class T>
void col2im3x3_add(const Mat<T>& col, int H, int W, Mat<T>& dx) {
  const Eigen::Index C = dx.rows();
  int k = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx_ = -1; dx_ <= 1; ++dx_, ++k) {
      const int x_dst = std::max(0, -dx_), x_src = std::max(0, dx_);
      const int len = W - std::abs(dx_);
      for (int y = 0; y < H; ++y) {
        const int ys = y + dy;
        if (ys < 0 || ys >= H) continue;
        dx.block(0, ys * W + x_src, C, len) += col.block(k * C, y * W + x_dst, C, len);
      }
    }
  }
}

template <class T>
Mat<T>& scratch_b() {
  static thread_local Mat<T> m;
  return m;
}

/// Source index / fraction tables for the scale-only resize mapping
/// src = dst * n_src / n_dst (no half-pixel shift).
template <class T>
void resize_axis(int n_src, int n_dst, std::vector<int32_t>& i0, std::vector<T>& f) {
  i0.resize(n_dst);
  f.resize(n_dst);
  const double s = double(n_src) / n_dst;
  for (int i = 0; i < n_dst; ++i) {
    double c = i * s;
    if (c > n_src - 1) c = n_src - 1;
    int lo = int(c);
    if (lo > n_src - 2) lo = std::max(0, n_src - 2);
    i0[i] = lo;
    f[i] = n_src > 1 ? T(c - lo) : T(0);
  }
}

}  // namespace detail

/// Plain (non-differentiable) bilinear resize of a (C x H*W) map; shared by
/// the tape op below and by the oracle ray marcher.
template <class T>
Mat<T> resize_bilinear_map(const Mat<T>& v, int H, int W, int H2, int W2) {
  std::vector<int32_t> xi, yi;
  std::vector<T> xf, yf;
  detail::resize_axis<T>(W, W2, xi, xf);
  detail::resize_axis<T>(H, H2, yi, yf);
  Mat<T> y(v.rows(), Eigen::Index(H2) * W2);
  for (int yo = 0; yo < H2; ++yo) {
    const int r0 = yi[yo] * W, r1 = (H > 1 ? yi[yo] + 1 : yi[yo]) * W;
    const T fy = yf[yo];
    for (int xo = 0; xo < W2; ++xo) {
      const int c0 = xi[xo], c1 = (W > 1 ? xi[xo] + 1 : xi[xo]);
      const T fx = xf[xo];
      y.col(yo * W2 + xo) = (T(1) - fy) * ((T(1) - fx) * v.col(r0 + c0) + fx * v.col(r0 + c1)) +
                            fy * ((T(1) - fx) * v.col(r1 + c0) + fx * v.col(r1 + c1));
    }
  }
  return y;
}

/// Same-size 2D convolution. weight is (Cout x C*k*k) with k in {1, 3};
/// 3x3 kernels use zero padding 1 and offset-major column layout.
template <class T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, int ksize) {
  Tape<T>& tp = *x.tape;
  const int H = tp.height(x), W = tp.width(x);
  if (H <= 0 || W <= 0) throw std::invalid_argument("conv2d: input lacks spatial shape");
  if (ksize != 1 && ksize != 3) throw std::invalid_argument("conv2d: kernel must be 1 or 3");
  const Eigen::Index C = tp.val(x).rows();
  if (tp.val(weight).cols() != C * ksize * ksize)
    throw std::invalid_argument("conv2d: weight shape does not match input channels");

  bool ng = tp.needs(x) || tp.needs(weight) || tp.needs(bias);
  Mat<T> y;
  auto col = std::make_shared<Mat<T>>();  // kept alive for the backward pass
  if (ksize == 1) {
    y.noalias() = tp.val(weight) * tp.val(x);
  } else {
    detail::im2col3x3(tp.val(x), H, W, *col);
    y.noalias() = tp.val(weight) * *col;
    if (!ng) col->resize(0, 0);
  }
  y.colwise() += tp.val(bias).col(0);

  Var<T> out = tp.make(std::move(y), ng, H, W);
  if (ng)
    tp.set_backprop(out, [x, weight, bias, ksize, H, W, col, out](Tape<T>& t) {
      const Mat<T>& g = t.grad_ref(out);
      if (t.needs(bias)) t.grad(bias) += g.rowwise().sum();
      if (ksize == 1) {
        if (t.needs(weight)) t.grad(weight).noalias() += g * t.val(x).transpose();
        if (t.needs(x)) t.grad(x).noalias() += t.val(weight).transpose() * g;
        return;
      }
      if (t.needs(weight)) t.grad(weight).noalias() += g * col->transpose();
      if (t.needs(x)) {
        Mat<T>& dcol = detail::scratch_b<T>();
        dcol.noalias() = t.val(weight).transpose() * g;
        detail::col2im3x3_add(dcol, H, W, t.grad(x));
      }
    });
  return out;
}

/// 2x2 average pooling; H and W must be even.
template <class T>
Var<T> avgpool2(Var<T> x) {
  Tape<T>& tp = *x.tape;
  const int H = tp.height(x), W = tp.width(x);
  if (H % 2 || W % 2) throw std::invalid_argument("avgpool2: odd spatial size");
  const int H2 = H / 2, W2 = W / 2;
  const Eigen::Index C = tp.val(x).rows();
  Mat<T> y(C, Eigen::Index(H2) * W2);
  const Mat<T>& v = tp.val(x);
  for (int yo = 0; yo < H2; ++yo)
    for (int xo = 0; xo < W2; ++xo) {
      const int p0 = (2 * yo) * W + 2 * xo, p1 = p0 + W;
      y.col(yo * W2 + xo) =
          T(0.25) * (v.col(p0) + v.col(p0 + 1) + v.col(p1) + v.col(p1 + 1));
    }
  Var<T> out = tp.make(std::move(y), tp.needs(x), H2, W2);
  if (tp.needs(out))
    tp.set_backprop(out, [x, H2, W2, W, out](Tape<T>& t) {
      const Mat<T>& g = t.grad_ref(out);
      Mat<T>& dx = t.grad(x);
      for (int yo = 0; yo < H2; ++yo)
        for (int xo = 0; xo < W2; ++xo) {
          const int p0 = (2 * yo) * W + 2 * xo, p1 = p0 + W;
          auto go = T(0.25) * g.col(yo * W2 + xo);
          dx.col(p0) += go;
          dx.col(p0 + 1) += go;
          dx.col(p1) += go;
          dx.col(p1 + 1) += go;
        }
    });
  return out;
}

/// Bilinear resize to (H2, W2). The source location of output pixel (x, y)
/// is (x*W/W2, y*H/H2): a pure scale with no half-pixel shift, matching the
/// scaled-intrinsics convention (fx/s, cx/s) used for coarse ray grids, so
/// depth upsampled between levels stays registered with the finer rays.
template <class T>
Var<T> resize_bilinear(Var<T> x, int H2, int W2) {
  Tape<T>& tp = *x.tape;
  const int H = tp.height(x), W = tp.width(x);
  if (H <= 0 || W <= 0) throw std::invalid_argument("resize_bilinear: input lacks spatial shape");

  std::vector<int32_t> xi, yi;
  std::vector<T> xf, yf;
  detail::resize_axis<T>(W, W2, xi, xf);
  detail::resize_axis<T>(H, H2, yi, yf);
  Mat<T> y = resize_bilinear_map(tp.val(x), H, W, H2, W2);
  Var<T> out = tp.make(std::move(y), tp.needs(x), H2, W2);
  if (tp.needs(out))
    tp.set_backprop(out, [x, xi, yi, xf, yf, H, W, H2, W2, out](Tape<T>& t) {
      const Mat<T>& g = t.grad_ref(out);
      Mat<T>& dx = t.grad(x);
      for (int yo = 0; yo < H2; ++yo) {
        const int r0 = yi[yo] * W, r1 = (H > 1 ? yi[yo] + 1 : yi[yo]) * W;
        const T fy = yf[yo];
        for (int xo = 0; xo < W2; ++xo) {
          const int c0 = xi[xo], c1 = (W > 1 ? xi[xo] + 1 : xi[xo]);
          const T fx = xf[xo];
          auto go = g.col(yo * W2 + xo);
          dx.col(r0 + c0) += (T(1) - fy) * (T(1) - fx) * go;
          dx.col(r0 + c1) += (T(1) - fy) * fx * go;
          dx.col(r1 + c0) += fy * (T(1) - fx) * go;
          dx.col(r1 + c1) += fy * fx * go;
        }
      }
    });
  return out;
}

/// Differentiable bilinear lookup of `map` (C x H*W) at continuous pixel
/// coordinates `coords` (2 x N, rows u then v). Pixel centers sit at integer
/// coordinates; queries outside [0, W-1] x [0, H-1] return zeros, as do
/// queries whose `mask` entry is zero (e.g. behind a camera). Differentiable
/// in both the map and the coordinates.
template <class T>
Var<T> bilinear_sample(Var<T> map, Var<T> coords, const Mat<T>& mask) {
  Tape<T>& tp = *map.tape;
  const int H = tp.height(map), W = tp.width(map);
  const Eigen::Index C = tp.val(map).rows();
  const Eigen::Index N = tp.val(coords).cols();
  if (tp.val(coords).rows() != 2) throw std::invalid_argument("bilinear_sample: coords must be 2 x N");
  if (mask.size() != 0 && mask.cols() != N)
    throw std::invalid_argument("bilinear_sample: mask length mismatch");

  struct Cell {
    int32_t x0 = 0, y0 = 0;
    T fx = 0, fy = 0;
    uint8_t valid = 0;
  };
  auto cells = std::make_shared<std::vector<Cell>>(N);

  const Mat<T>& m = tp.val(map);
  const Mat<T>& uv = tp.val(coords);
  Mat<T> y = Mat<T>::Zero(C, N);
  for (Eigen::Index q = 0; q < N; ++q) {
    if (mask.size() != 0 && mask(0, q) == T(0)) continue;
    const T u = uv(0, q), v = uv(1, q);
    if (!(u >= T(0) && u <= T(W - 1) && v >= T(0) && v <= T(H - 1))) continue;
    Cell& c = (*cells)[q];
    c.x0 = std::min(int(u), W - 2 < 0 ? 0 : W - 2);
    c.y0 = std::min(int(v), H - 2 < 0 ? 0 : H - 2);
    c.fx = u - T(c.x0);
    c.fy = v - T(c.y0);
    c.valid = 1;
    const int p00 = c.y0 * W + c.x0;
    const int p10 = p00 + (W > 1 ? 1 : 0);
    const int p01 = p00 + (H > 1 ? W : 0);
    const int p11 = p01 + (W > 1 ? 1 : 0);
    y.col(q) = (T(1) - c.fy) * ((T(1) - c.fx) * m.col(p00) + c.fx * m.col(p10)) +
               c.fy * ((T(1) - c.fx) * m.col(p01) + c.fx * m.col(p11));
  }

  bool ng = tp.needs(map) || tp.needs(coords);
  Var<T> out = tp.make(std::move(y), ng, tp.height(coords), tp.width(coords));
  if (ng)
    tp.set_backprop(out, [map, coords, cells, H, W, out](Tape<T>& t) {
      const Mat<T>& g = t.grad_ref(out);
      const Mat<T>& m = t.val(map);
      const bool need_map = t.needs(map), need_uv = t.needs(coords);
      for (Eigen::Index q = 0; q < g.cols(); ++q) {
        const auto& c = (*cells)[q];
        if (!c.valid) continue;
        const int p00 = c.y0 * W + c.x0;
        const int p10 = p00 + (W > 1 ? 1 : 0);
        const int p01 = p00 + (H > 1 ? W : 0);
        const int p11 = p01 + (W > 1 ? 1 : 0);
        auto go = g.col(q);
        if (need_map) {
          Mat<T>& dm = t.grad(map);
          dm.col(p00) += (T(1) - c.fy) * (T(1) - c.fx) * go;
          dm.col(p10) += (T(1) - c.fy) * c.fx * go;
          dm.col(p01) += c.fy * (T(1) - c.fx) * go;
          dm.col(p11) += c.fy * c.fx * go;
        }
        if (need_uv) {
          Mat<T>& duv = t.grad(coords);
          duv(0, q) += go.dot((T(1) - c.fy) * (m.col(p10) - m.col(p00)) +
                              c.fy * (m.col(p11) - m.col(p01)));
          duv(1, q) += go.dot((T(1) - c.fx) * (m.col(p01) - m.col(p00)) +
                              c.fx * (m.col(p11) - m.col(p10)));
        }
      }
    });
  return out;
}

}  // namespace nmvs::ad

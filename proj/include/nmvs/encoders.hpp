// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

#include "nmvs/core/nn.hpp"

// Shared U-Net feature extractor and sinusoidal positional encoding.

namespace nmvs {

inline constexpr int kFeatureDim = 64;  // per-pixel feature width d

struct PosEncodingConfig {
  int num_frequencies = 10;
  bool include_input = true;

  int dim() const { return 3 * (2 * num_frequencies + (include_input ? 1 : 0)); }
};

/// gamma(x) for one 3-vector: per dimension p, optionally p itself, then
/// sin(2^l*pi*p), cos(2^l*pi*p) for l = 0..L-1.
template <class T>
Vec<T> positional_encode(const Vec3<T>& x, const PosEncodingConfig& cfg) {
  Vec<T> out(cfg.dim());
  const int per = 2 * cfg.num_frequencies + (cfg.include_input ? 1 : 0);
  for (int d = 0; d < 3; ++d) {
    int r = d * per;
    if (cfg.include_input) out(r++) = x(d);
    T freq = T(EIGEN_PI);
    for (int l = 0; l < cfg.num_frequencies; ++l, freq *= T(2)) {
      out(r++) = std::sin(freq * x(d));
      out(r++) = std::cos(freq * x(d));
    }
  }
  return out;
}

/// Feature grid of one source view: kFeatureDim x H*W.
template <class T>
struct FeatureMap {
  ad::Var<T> values;
  int source_view_id = -1;
};

/// U-Net: three downsampling levels (channels 32 -> 64 -> 128), mirrored
/// decoder with additive skip connections (1x1 alignments where channel
/// counts shrink), final 1x1 projection to kFeatureDim.
template <class T>
struct UNetParams {
  Conv<T> enc0, enc1, enc2, bottleneck;
  Conv<T> dec2, align1, dec1, align0, dec0, proj;

  static UNetParams init(std::mt19937& rng) {
    UNetParams p;
    p.enc0 = init::conv<T>(32, 3, 3, rng);
    p.enc1 = init::conv<T>(64, 32, 3, rng);
    p.enc2 = init::conv<T>(128, 64, 3, rng);
    p.bottleneck = init::conv<T>(128, 128, 3, rng);
    p.dec2 = init::conv<T>(128, 128, 3, rng);
    p.align1 = init::conv<T>(64, 128, 1, rng);
    p.dec1 = init::conv<T>(64, 64, 3, rng);
    p.align0 = init::conv<T>(32, 64, 1, rng);
    p.dec0 = init::conv<T>(32, 32, 3, rng);
    p.proj = init::conv<T>(kFeatureDim, 32, 1, rng);
    return p;
  }

  template <class F>
  void visit(F&& f) {
    f("unet.enc0", enc0);
    f("unet.enc1", enc1);
    f("unet.enc2", enc2);
    f("unet.bottleneck", bottleneck);
    f("unet.dec2", dec2);
    f("unet.align1", align1);
    f("unet.dec1", dec1);
    f("unet.align0", align0);
    f("unet.dec0", dec0);
    f("unet.proj", proj);
  }
};

namespace ad {

template <class T>
struct UNetVars {
  ConvVars<T> enc0, enc1, enc2, bottleneck;
  ConvVars<T> dec2, align1, dec1, align0, dec0, proj;
};

template <class T>
ConvVars<T> push(Tape<T>& tp, const Conv<T>& c) {
  return {tp.param(c.weight), tp.param(c.bias), c.ksize};
}
template <class T>
DenseVars<T> push(Tape<T>& tp, const Dense<T>& d) {
  return {tp.param(d.weight), tp.param(d.bias)};
}
template <class T>
LstmVars<T> push(Tape<T>& tp, const LstmCell<T>& c) {
  return {tp.param(c.w_ih), tp.param(c.w_hh), tp.param(c.bias), c.hidden};
}

template <class T>
UNetVars<T> push_unet(Tape<T>& tp, const UNetParams<T>& p) {
  return {push(tp, p.enc0),   push(tp, p.enc1),   push(tp, p.enc2), push(tp, p.bottleneck),
          push(tp, p.dec2),   push(tp, p.align1), push(tp, p.dec1), push(tp, p.align0),
          push(tp, p.dec0),   push(tp, p.proj)};
}

/// Per-pixel features for one image (3 x H*W in [0,1]); H and W must be
/// divisible by 8 (datasets are padded at load time).
template <class T>
Var<T> unet_forward(const UNetVars<T>& p, Var<T> image) {
  Tape<T>& tp = *image.tape;
  const int H = tp.height(image), W = tp.width(image);
  if (H % 8 || W % 8) throw std::invalid_argument("unet: resolution must be divisible by 8");
  Var<T> a0 = gelu(conv(image, p.enc0));
  Var<T> a1 = gelu(conv(avgpool2(a0), p.enc1));
  Var<T> a2 = gelu(conv(avgpool2(a1), p.enc2));
  Var<T> ab = gelu(conv(avgpool2(a2), p.bottleneck));
  Var<T> b2 = gelu(conv(add(resize_bilinear(ab, H / 4, W / 4), a2), p.dec2));
  Var<T> b1 = gelu(conv(add(conv(resize_bilinear(b2, H / 2, W / 2), p.align1), a1), p.dec1));
  Var<T> b0 = gelu(conv(add(conv(resize_bilinear(b1, H, W), p.align0), a0), p.dec0));
  return conv(b0, p.proj);
}

/// Differentiable positional encoding of points (3 x N).
template <class T>
Var<T> posenc(Var<T> x, const PosEncodingConfig& cfg) {
  Tape<T>& tp = *x.tape;
  const Eigen::Index N = tp.val(x).cols();
  const int per = 2 * cfg.num_frequencies + (cfg.include_input ? 1 : 0);
  Mat<T> y(3 * per, N);
  const Mat<T>& v = tp.val(x);
  for (int d = 0; d < 3; ++d) {
    int r = d * per;
    auto p = v.row(d).array();
    if (cfg.include_input) y.row(r++) = v.row(d);
    T freq = T(EIGEN_PI);
    for (int l = 0; l < cfg.num_frequencies; ++l, freq *= T(2)) {
      y.row(r++) = (freq * p).sin();
      y.row(r++) = (freq * p).cos();
    }
  }
  Var<T> out = tp.make(std::move(y), tp.needs(x), tp.height(x), tp.width(x));
  if (tp.needs(out))
    tp.set_backprop(out, [x, cfg, per, out](Tape<T>& t) {
      const Mat<T>& g = t.grad_ref(out);
      const Mat<T>& yv = t.val(out);
      Mat<T>& dx = t.grad(x);
      for (int d = 0; d < 3; ++d) {
        int r = d * per;
        if (cfg.include_input) dx.row(d) += g.row(r++);
        T freq = T(EIGEN_PI);
        for (int l = 0; l < cfg.num_frequencies; ++l, freq *= T(2), r += 2) {
          // d/dp sin(f p) = f cos(f p); the cos value is the next row.
          dx.row(d).array() += freq * (g.row(r).array() * yv.row(r + 1).array() -
                                       g.row(r + 1).array() * yv.row(r).array());
        }
      }
    });
  return out;
}

}  // namespace ad
}  // namespace nmvs

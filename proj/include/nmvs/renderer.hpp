// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include "nmvs/ray_marcher.hpp"

// Novel-view color synthesis: sample colors and features at the ray-marched
// surface, blend them with learned per-view weights, and emit RGB plus a
// confidence map.

namespace nmvs {

inline constexpr int kColorSampleDim = 3 + kFeatureDim;  // k_i = [c_i, f_i]
inline constexpr int kBlendFeatDim = 64;                 // multi-view aware k'_i
inline constexpr double kWeightEps = 1e-6;               // blend-weight normalization guard

/// Learned blending parameters (shared across the three views) and the
/// final rendering MLP (3 layers, hidden 64, heads: RGB and confidence).
template <class T>
struct RendererParams {
  Dense<T> blend1, blend2;
  Dense<T> render1, render2, render3;

  static RendererParams init(std::mt19937& rng) {
    RendererParams p;
    p.blend1 = init::dense<T>(64, 3 * kColorSampleDim, rng);
    p.blend2 = init::dense<T>(kBlendFeatDim + 1, 64, rng);
    p.render1 = init::dense<T>(64, 2 * kBlendFeatDim, rng);
    p.render2 = init::dense<T>(64, 64, rng);
    p.render3 = init::dense<T>(4, 64, rng);
    p.render3.weight *= T(0.1);
    // Start confident: the confidence head opens near Q ~ 0.9 so the
    // reconstruction term carries gradient from the first steps.
    p.render3.bias(3, 0) = T(2.2);
    return p;
  }

  template <class F>
  void visit(F&& f) {
    f("renderer.blend1", blend1);
    f("renderer.blend2", blend2);
    f("renderer.render1", render1);
    f("renderer.render2", render2);
    f("renderer.render3", render3);
  }
};

namespace ad {

template <class T>
struct RendererVars {
  DenseVars<T> blend1, blend2;
  DenseVars<T> render1, render2, render3;
};

template <class T>
RendererVars<T> push_renderer(Tape<T>& tp, const RendererParams<T>& p) {
  return {push(tp, p.blend1), push(tp, p.blend2), push(tp, p.render1), push(tp, p.render2),
          push(tp, p.render3)};
}

/// k_i = [c_i, f_i] per view, bilinearly sampled at the surface points;
/// out-of-frustum samples are zero.
template <class T>
std::array<Var<T>, 3> sample_color_features(Var<T> surface_points,
                                            const std::array<SourceView<T>, 3>& views) {
  std::array<Var<T>, 3> k;
  for (int i = 0; i < 3; ++i) {
    auto proj = project_points(surface_points, views[i].intrinsics, views[i].pose);
    Var<T> c = bilinear_sample(views[i].image, proj.coords, proj.mask);
    Var<T> f = bilinear_sample(views[i].features, proj.coords, proj.mask);
    k[i] = concat_rows({c, f});
  }
  return k;
}

template <class T>
struct BlendOutput {
  Var<T> rgb;         // 3 x N in [0,1]
  Var<T> confidence;  // 1 x N in [0,1]
  Var<T> variance;        // barycentric variance of the raw k_i
  Var<T> pooled_variance; // weighted variance of the k'_i
};

/// Learned pooling of the three color samples. Barycentric mean/variance
/// capture global agreement; a shared MLP turns each [k_i, mu, v] into a
/// multi-view aware feature and a blending weight w_i in [0,1]; the
/// weight-normalized mean/variance of those features feed the final MLP.
template <class T>
BlendOutput<T> blend(const std::array<Var<T>, 3>& k, const std::array<double, 3>& weights,
                     const RendererVars<T>& p) {
  Tape<T>& tape = *k[0].tape;
  std::array<Var<T>, 3> b;
  for (int i = 0; i < 3; ++i)
    b[i] = tape.constant(Mat<T>::Constant(1, 1, T(weights[i])));
  Var<T> mv = weighted_mean_variance(k, b);  // [mu; v] under barycentric weights

  std::array<Var<T>, 3> kp;
  std::array<Var<T>, 3> w;
  for (int i = 0; i < 3; ++i) {
    Var<T> h = gelu(linear(concat_rows({k[i], mv}), p.blend1));
    Var<T> out = linear(h, p.blend2);
    kp[i] = slice_rows(out, 0, kBlendFeatDim);
    w[i] = sigmoid(slice_rows(out, kBlendFeatDim, 1));
  }
  Var<T> wsum = affine(add(add(w[0], w[1]), w[2]), T(1), T(kWeightEps));
  Var<T> winv = reciprocal(wsum);
  for (int i = 0; i < 3; ++i) w[i] = hadamard(w[i], winv);

  Var<T> pooled = weighted_mean_variance(kp, w);  // [mu'; v'] under learned weights
  Var<T> h = gelu(linear(pooled, p.render1));
  h = gelu(linear(h, p.render2));
  Var<T> out = linear(h, p.render3);
  return {sigmoid(slice_rows(out, 0, 3)), sigmoid(slice_rows(out, 3, 1)),
          slice_rows(mv, kColorSampleDim, kColorSampleDim),
          slice_rows(pooled, kBlendFeatDim, kBlendFeatDim)};
}

template <class T>
struct RenderGraph {
  Var<T> color;       // 3 x H*W
  Var<T> depth;       // 1 x H*W
  Var<T> confidence;  // 1 x H*W
};

/// Full differentiable forward pass for one target view: march to the
/// surface, then blend source colors/features at the surface points.
/// Covers every pixel of the target in a single invocation.
template <class T>
RenderGraph<T> render_graph(Tape<T>& tape, const MarcherVars<T>& marcher,
                            const RendererVars<T>& renderer, const CameraIntrinsics& target_K,
                            const CameraPose& target_pose,
                            const std::array<SourceView<T>, 3>& views,
                            const std::array<double, 3>& weights, const MarchSchedule& schedule,
                            const MarchOptions& opt) {
  MarchResult<T> m = march(tape, marcher, target_K, target_pose, views, weights, schedule, opt);
  Var<T> surface = ray_points(m.depth, m.rays);
  std::array<Var<T>, 3> k = sample_color_features(surface, views);
  BlendOutput<T> b = blend(k, weights, renderer);
  if (opt.stats) {
    ++opt.stats->blend_passes;
    opt.stats->peak_tape_bytes = tape.peak_bytes();
  }
  return {b.rgb, m.depth, b.confidence};
}

}  // namespace ad

/// Materialized render of one target pose.
struct RenderOutput {
  Eigen::MatrixXf color;       // 3 x H*W in [0,1]
  Eigen::MatrixXf depth;       // 1 x H*W, world units
  Eigen::MatrixXf confidence;  // 1 x H*W in [0,1]
  int width = 0, height = 0;
  RenderStats stats;
};

}  // namespace nmvs

// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "nmvs/camera.hpp"
#include "nmvs/encoders.hpp"

// Differentiable coarse-to-fine sphere tracer: multi-view feature
// aggregation at ray samples, 3x3 spatial refinement, and a recurrent step
// predictor, run over a 10/5/3 schedule at quarter/half/full resolution.

namespace nmvs {

struct MarchSchedule {
  std::vector<std::pair<int, int>> levels = {{4, 10}, {2, 5}, {1, 3}};  // (scale, steps)

  int total_steps() const {
    int n = 0;
    for (auto& [s, k] : levels) n += k;
    return n;
  }

  void validate() const {
    if (levels.empty()) throw std::invalid_argument("schedule: empty");
    int prev = 1 << 30;
    for (auto& [scale, steps] : levels) {
      if (scale < 1 || scale >= prev) throw std::invalid_argument("schedule: scales must strictly decrease");
      if (steps < 1) throw std::invalid_argument("schedule: steps must be positive");
      prev = scale;
    }
    if (levels.back().first != 1) throw std::invalid_argument("schedule: final scale must be 1");
  }
};

/// Per-render instrumentation counters.
struct RenderStats {
  std::int64_t predict_steps = 0;
  std::int64_t blend_passes = 0;
  std::size_t peak_tape_bytes = 0;
};

struct MarchOptions {
  double t_init = 0;                 // constant start close to the camera
  double t_min = 0, t_max = 0;       // depth clamp range
  Vec3<double> norm_center = Vec3<double>::Zero();  // bounding-sphere transform
  double norm_radius = 1;
  PosEncodingConfig posenc;
  bool use_posenc = true;
  int conv_kernel = 3;               // 1x1 toggle mirrors the ablation study
  bool reset_recurrent_between_levels = false;
  RenderStats* stats = nullptr;
};

/// Spatial refinement / step prediction parameters of the marcher.
template <class T>
struct MarcherParams {
  Conv<T> refine1, refine2;
  LstmCell<T> lstm;
  Dense<T> step_head;

  static MarcherParams init(int g_dim, int conv_kernel, double step_bias, std::mt19937& rng) {
    MarcherParams p;
    p.refine1 = init::conv<T>(kFeatureDim, g_dim, conv_kernel, rng);
    p.refine2 = init::conv<T>(kFeatureDim, kFeatureDim, conv_kernel, rng);
    p.lstm = init::lstm<T>(32, kFeatureDim, rng);
    p.step_head = init::dense<T>(1, 32, rng);
    p.step_head.weight *= T(0.01);
    // A positive initial bias makes the untrained marcher sweep forward
    // through the scene instead of idling at t_init.
    p.step_head.bias(0, 0) = T(step_bias);
    return p;
  }

  template <class F>
  void visit(F&& f) {
    f("marcher.refine1", refine1);
    f("marcher.refine2", refine2);
    f("marcher.lstm", lstm);
    f("marcher.step_head", step_head);
  }
};

namespace ad {

template <class T>
struct MarcherVars {
  ConvVars<T> refine1, refine2;
  LstmVars<T> lstm;
  DenseVars<T> step_head;
};

template <class T>
MarcherVars<T> push_marcher(Tape<T>& tp, const MarcherParams<T>& p) {
  return {push(tp, p.refine1), push(tp, p.refine2), push(tp, p.lstm), push(tp, p.step_head)};
}

/// One source view as consumed by the marcher and renderer.
template <class T>
struct SourceView {
  CameraIntrinsics intrinsics;
  CameraPose pose;
  Var<T> features;  // kFeatureDim x H*W
  Var<T> image;     // 3 x H*W, constant
};

template <class T>
struct MarchState {
  Var<T> t;  // 1 x N depth along each ray
  LstmState<T> recurrent;
  int level = 0;
};

template <class T>
struct Aggregated {
  Var<T> g;         // [mu, v, gamma(x)] rows x N
  Var<T> mean;      // mu
  Var<T> variance;  // v
};

/// Maps world points into the normalized bounding sphere used by the
/// positional encoding.
template <class T>
Var<T> normalize_points(Var<T> x, const Vec3<double>& center, double radius) {
  Tape<T>& tp = *x.tape;
  Mat<T> shift = (-center / radius).template cast<T>();
  return add_bias(scale(x, T(1.0 / radius)), tp.constant(shift));
}

/// Projects sample points into every working-set view, samples features,
/// and pools them into the barycentric weighted mean and variance of Eq.-2
/// style aggregation; out-of-frustum samples contribute zero features.
template <class T>
Aggregated<T> aggregate(Var<T> points, const std::array<SourceView<T>, 3>& views,
                        const std::array<double, 3>& weights, const MarchOptions& opt) {
  Tape<T>& tape = *points.tape;
  std::array<Var<T>, 3> f;
  std::array<Var<T>, 3> b;
  for (int i = 0; i < 3; ++i) {
    auto proj = project_points(points, views[i].intrinsics, views[i].pose);
    f[i] = bilinear_sample(views[i].features, proj.coords, proj.mask);
    b[i] = tape.constant(Mat<T>::Constant(1, 1, T(weights[i])));
  }
  // One fused node holds [mu; v].
  Var<T> mv = weighted_mean_variance(f, b);
  const int C = int(tape.val(f[0]).rows());
  Aggregated<T> agg;
  agg.mean = slice_rows(mv, 0, C);
  agg.variance = slice_rows(mv, C, C);
  if (opt.use_posenc) {
    Var<T> gamma = posenc(normalize_points(points, opt.norm_center, opt.norm_radius), opt.posenc);
    agg.g = concat_rows({mv, gamma});
  } else {
    agg.g = mv;
  }
  return agg;
}

/// Two refinement convolutions constraining each ray by its neighbours.
template <class T>
Var<T> refine_spatial(Var<T> g, const MarcherVars<T>& p) {
  return gelu(conv(gelu(conv(g, p.refine1)), p.refine2));
}

/// Recurrent displacement prediction: shared-weight LSTM over pixels,
/// linear head producing an unconstrained signed step.
template <class T>
std::pair<Var<T>, LstmState<T>> predict_step(Var<T> refined, const LstmState<T>& state,
                                             const MarcherVars<T>& p) {
  LstmState<T> next = lstm_step(refined, state, p.lstm);
  Var<T> delta = linear(next.h, p.step_head);
  return {delta, next};
}

template <class T>
struct MarchResult {
  Var<T> depth;              // 1 x H*W at full resolution
  Aggregated<T> final_features;  // aggregated at the final surface points
  MarchState<T> state;
  RayBundle<T> rays;         // full-resolution target rays
};

/// Full coarse-to-fine march for one target view.
template <class T>
MarchResult<T> march(Tape<T>& tape, const MarcherVars<T>& params,
                     const CameraIntrinsics& target_K, const CameraPose& target_pose,
                     const std::array<SourceView<T>, 3>& views,
                     const std::array<double, 3>& weights, const MarchSchedule& schedule,
                     const MarchOptions& opt) {
  schedule.validate();
  const int coarsest = schedule.levels.front().first;
  if (target_K.width % coarsest || target_K.height % coarsest)
    throw std::invalid_argument("march: resolution not divisible by the coarsest scale");

  MarchState<T> st;
  RayBundle<T> rays;
  for (size_t lvl = 0; lvl < schedule.levels.size(); ++lvl) {
    const auto [scale, steps] = schedule.levels[lvl];
    rays = generate_rays<T>(target_K, target_pose, scale);
    const Eigen::Index n = rays.directions.cols();
    if (lvl == 0) {
      st.t = tape.constant(Mat<T>::Constant(1, n, T(opt.t_init)), rays.height, rays.width);
      st.recurrent.h = tape.constant(Mat<T>::Zero(32, n), rays.height, rays.width);
      st.recurrent.c = tape.constant(Mat<T>::Zero(32, n), rays.height, rays.width);
    } else {
      st.t = resize_bilinear(st.t, rays.height, rays.width);
      if (opt.reset_recurrent_between_levels) {
        st.recurrent.h = tape.constant(Mat<T>::Zero(32, n), rays.height, rays.width);
        st.recurrent.c = tape.constant(Mat<T>::Zero(32, n), rays.height, rays.width);
      } else {
        st.recurrent.h = resize_bilinear(st.recurrent.h, rays.height, rays.width);
        st.recurrent.c = resize_bilinear(st.recurrent.c, rays.height, rays.width);
      }
    }
    st.level = int(lvl);
    for (int step = 0; step < steps; ++step) {
      Var<T> x = ray_points(st.t, rays);
      Aggregated<T> agg = aggregate(x, views, weights, opt);
      Var<T> refined = refine_spatial(agg.g, params);
      auto [delta, next] = predict_step(refined, st.recurrent, params);
      st.recurrent = next;
      st.t = clamp(add(st.t, delta), T(opt.t_min), T(opt.t_max));
      if (opt.stats) ++opt.stats->predict_steps;
    }
  }

  MarchResult<T> res;
  res.depth = st.t;
  res.rays = rays;
  res.final_features = aggregate(ray_points(st.t, rays), views, weights, opt);
  res.state = st;
  return res;
}

}  // namespace ad

/// Per-sample step size supplied by an analytic oracle instead of the
/// learned predictor: (point, ray direction, current t) -> signed step.
using StepOracle = std::function<double(const Vec3<double>&, const Vec3<double>&, double)>;

/// Runs the same schedule / upsampling plumbing as the learned march with
/// the step predictor replaced by `oracle`. Plain double arithmetic.
inline Mat<double> oracle_march(const CameraIntrinsics& target_K, const CameraPose& target_pose,
                                const MarchSchedule& schedule, const StepOracle& oracle,
                                double t_init, double t_min, double t_max) {
  schedule.validate();
  const int coarsest = schedule.levels.front().first;
  if (target_K.width % coarsest || target_K.height % coarsest)
    throw std::invalid_argument("oracle_march: resolution not divisible by the coarsest scale");

  Mat<double> t;
  int prev_h = 0, prev_w = 0;
  for (size_t lvl = 0; lvl < schedule.levels.size(); ++lvl) {
    const auto [scale, steps] = schedule.levels[lvl];
    RayBundle<double> rays = generate_rays<double>(target_K, target_pose, scale);
    if (lvl == 0)
      t = Mat<double>::Constant(1, rays.directions.cols(), t_init);
    else
      t = ad::resize_bilinear_map(t, prev_h, prev_w, rays.height, rays.width);
    for (int step = 0; step < steps; ++step) {
      for (Eigen::Index q = 0; q < t.cols(); ++q) {
        const Vec3<double> d = rays.directions.col(q);
        const Vec3<double> x = rays.origin + t(0, q) * d;
        t(0, q) = std::clamp(t(0, q) + oracle(x, d, t(0, q)), t_min, t_max);
      }
    }
    prev_h = rays.height;
    prev_w = rays.width;
  }
  return t;
}

}  // namespace nmvs

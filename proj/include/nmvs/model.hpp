// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nmvs/core/adam.hpp"
#include "nmvs/renderer.hpp"

namespace nmvs {

struct TrainToggles {
  bool use_posenc = true;
  std::string view_selection = "delaunay";  // or "proximity"
  int conv_kernel = 3;                      // 3x3 or the 1x1 ablation
  bool reset_recurrent_between_levels = false;
  bool use_confidence_loss = true;
};

struct TrainConfig {
  int steps = 2000;
  double learning_rate = 5e-4;
  std::uint32_t seed = 0;
  double lambda = 0.1;
  MarchSchedule schedule;
  TrainToggles toggles;
  int checkpoint_every = 1000;
  int eval_every = 100;
  int posenc_frequencies = 10;

  void validate() const {
    if (steps < 0) throw std::invalid_argument("config: steps must be >= 0");
    if (!(learning_rate > 0)) throw std::invalid_argument("config: learning rate must be > 0");
    if (lambda < 0) throw std::invalid_argument("config: lambda must be >= 0");
    if (toggles.view_selection != "delaunay" && toggles.view_selection != "proximity")
      throw std::invalid_argument("config: view_selection must be delaunay or proximity");
    if (toggles.conv_kernel != 1 && toggles.conv_kernel != 3)
      throw std::invalid_argument("config: conv_kernel must be 1 or 3");
    if (posenc_frequencies < 0) throw std::invalid_argument("config: posenc_frequencies >= 0");
    schedule.validate();
  }
};

/// All trainable parameter groups of the two jointly trained networks.
template <class T>
struct ModelParams {
  UNetParams<T> unet;
  MarcherParams<T> marcher;
  RendererParams<T> renderer;
  PosEncodingConfig posenc;
  bool use_posenc = true;
  int conv_kernel = 3;

  int aggregated_dim() const {
    return 2 * kFeatureDim + (use_posenc ? posenc.dim() : 0);
  }

  static ModelParams init(const TrainConfig& cfg, double scene_far) {
    ModelParams p;
    p.posenc.num_frequencies = cfg.posenc_frequencies;
    p.use_posenc = cfg.toggles.use_posenc;
    p.conv_kernel = cfg.toggles.conv_kernel;
    std::mt19937 rng(cfg.seed);
    p.unet = UNetParams<T>::init(rng);
    const double step_bias = 0.8 * scene_far / 18.0;
    p.marcher = MarcherParams<T>::init(p.aggregated_dim(), p.conv_kernel, step_bias, rng);
    p.renderer = RendererParams<T>::init(rng);
    return p;
  }

  /// Enumerates every tensor as (name, matrix) in a fixed order.
  template <class F>
  void for_each_tensor(F&& f) {
    auto dispatch = [&](const std::string& name, auto& layer) {
      using L = std::decay_t<decltype(layer)>;
      if constexpr (std::is_same_v<L, Conv<T>> || std::is_same_v<L, Dense<T>>) {
        f(name + ".w", layer.weight);
        f(name + ".b", layer.bias);
      } else {
        f(name + ".w_ih", layer.w_ih);
        f(name + ".w_hh", layer.w_hh);
        f(name + ".b", layer.bias);
      }
    };
    unet.visit(dispatch);
    marcher.visit(dispatch);
    renderer.visit(dispatch);
  }

  template <class F>
  void for_each_tensor(F&& f) const {
    const_cast<ModelParams*>(this)->for_each_tensor(
        [&](const std::string& name, Mat<T>& m) { f(name, std::as_const(m)); });
  }
};

namespace ad {

template <class T>
struct ModelVars {
  UNetVars<T> unet;
  MarcherVars<T> marcher;
  RendererVars<T> renderer;
  std::vector<std::pair<std::string, Var<T>>> tensors;  // same order as for_each_tensor
};

/// Pushes all parameters onto a tape; `trainable` controls whether the
/// resulting graph tracks gradients for them.
template <class T>
ModelVars<T> push_model(Tape<T>& tape, ModelParams<T>& params, bool trainable) {
  ModelVars<T> mv;
  std::vector<Var<T>> order;
  params.for_each_tensor([&](const std::string& name, Mat<T>& m) {
    Var<T> v = trainable ? tape.param(m) : tape.constant(m);
    mv.tensors.emplace_back(name, v);
    order.push_back(v);
  });
  // Rebuild the layer views in the same traversal order.
  size_t i = 0;
  auto conv_vars = [&](const Conv<T>& c) {
    ConvVars<T> cv{order[i], order[i + 1], c.ksize};
    i += 2;
    return cv;
  };
  auto dense_vars = [&]() {
    DenseVars<T> dv{order[i], order[i + 1]};
    i += 2;
    return dv;
  };
  auto lstm_vars = [&](const LstmCell<T>& c) {
    LstmVars<T> lv{order[i], order[i + 1], order[i + 2], c.hidden};
    i += 3;
    return lv;
  };
  mv.unet = {conv_vars(params.unet.enc0),   conv_vars(params.unet.enc1),
             conv_vars(params.unet.enc2),   conv_vars(params.unet.bottleneck),
             conv_vars(params.unet.dec2),   conv_vars(params.unet.align1),
             conv_vars(params.unet.dec1),   conv_vars(params.unet.align0),
             conv_vars(params.unet.dec0),   conv_vars(params.unet.proj)};
  mv.marcher.refine1 = conv_vars(params.marcher.refine1);
  mv.marcher.refine2 = conv_vars(params.marcher.refine2);
  mv.marcher.lstm = lstm_vars(params.marcher.lstm);
  mv.marcher.step_head = dense_vars();
  mv.renderer.blend1 = dense_vars();
  mv.renderer.blend2 = dense_vars();
  mv.renderer.render1 = dense_vars();
  mv.renderer.render2 = dense_vars();
  mv.renderer.render3 = dense_vars();
  return mv;
}

}  // namespace ad

/// On-disk training state: model, optimizer, step counter, config snapshot.
struct Checkpoint {
  ModelParams<float> model;
  Adam<float> optimizer;
  std::int64_t step = 0;
  TrainConfig config;
  double scene_far = 0;  // far bound the model was initialized against
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

TrainConfig train_config_from_json_file(const std::string& path);
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace nmvs

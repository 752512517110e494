// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#include "nmvs/trainer.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <unordered_map>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace nmvs {

namespace {

using ad::Tape;
using ad::Var;

WorkingSet remap_to_dataset(WorkingSet ws, const std::vector<int>& sources) {
  for (auto& id : ws.view_ids) id = sources[id];
  return ws;
}

std::array<ad::SourceView<float>, 3> push_sources(Tape<float>& tape,
                                                  const ad::ModelVars<float>& mv,
                                                  const SceneDataset& ds, const WorkingSet& ws) {
  std::array<ad::SourceView<float>, 3> views;
  for (int i = 0; i < 3; ++i) {
    const SceneView& sv = ds.views[ws.view_ids[i]];
    Var<float> image =
        tape.constant(sv.image.data, sv.image.height, sv.image.width);
    views[i].intrinsics = sv.intrinsics;
    views[i].pose = sv.pose;
    views[i].image = image;
    views[i].features = ad::unet_forward(mv.unet, image);
  }
  return views;
}

std::array<double, 3> ws_weights(const WorkingSet& ws) {
  return {ws.weights[0], ws.weights[1], ws.weights[2]};
}

std::vector<int> train_sources_excluding(const SceneDataset& ds, int target) {
  std::vector<int> src;
  for (int i : ds.train_indices)
    if (i != target) src.push_back(i);
  return src;
}

RenderOutput materialize(const SceneDataset& ds, int target, const ad::RenderGraph<float>& g,
                         const RenderStats& stats) {
  RenderOutput out;
  out.width = ds.views[target].image.width;
  out.height = ds.views[target].image.height;
  out.color = g.color.value();
  out.depth = g.depth.value();
  out.confidence = g.confidence.value();
  out.stats = stats;
  return out;
}

}  // namespace

WorkingSet choose_working_set(const SceneDataset& ds, const std::vector<int>& sources,
                              const Eigen::Vector3d& target_center, const std::string& method) {
  if (sources.size() < 3)
    throw std::invalid_argument("choose_working_set: need at least 3 source views");
  std::vector<Eigen::Vector3d> centers;
  centers.reserve(sources.size());
  for (int i : sources) centers.push_back(ds.views[i].pose.translation);
  if (method == "proximity")
    return remap_to_dataset(select_proximity(centers, target_center), sources);
  return remap_to_dataset(select_working_set(build_constellation(centers), target_center),
                          sources);
}

MarchOptions make_march_options(const SceneDataset& ds, const ModelParams<float>& model,
                                bool reset_recurrent, RenderStats* stats) {
  MarchOptions opt;
  opt.t_init = 0.05 * ds.far;
  opt.t_min = 0.0;
  opt.t_max = 1.2 * ds.far;
  opt.norm_center = ds.norm_center;
  opt.norm_radius = ds.norm_radius;
  opt.posenc = model.posenc;
  opt.use_posenc = model.use_posenc;
  opt.conv_kernel = model.conv_kernel;
  opt.reset_recurrent_between_levels = reset_recurrent;
  opt.stats = stats;
  return opt;
}

TrainResult train(const SceneDataset& ds, const TrainConfig& config, const std::string& out_dir,
                  const Checkpoint* resume) {
  config.validate();
  if (ds.train_indices.size() < 4)
    throw std::invalid_argument("train: need at least 4 training views");
  for (const auto& v : ds.views)
    if (v.image.width != ds.views.front().image.width ||
        v.image.height != ds.views.front().image.height)
      throw std::invalid_argument("train: all views must share a resolution");

  TrainResult result;
  if (resume) {
    result.checkpoint = *resume;
    result.checkpoint.config = config;
    if (resume->model.use_posenc != config.toggles.use_posenc ||
        resume->model.conv_kernel != config.toggles.conv_kernel ||
        resume->model.posenc.num_frequencies != config.posenc_frequencies)
      throw std::invalid_argument("train: resume config changes the model architecture");
  } else {
    result.checkpoint.config = config;
    result.checkpoint.scene_far = ds.far;
    result.checkpoint.model = ModelParams<float>::init(config, ds.far);
    result.checkpoint.step = 0;
  }
  Checkpoint& ckpt = result.checkpoint;
  ckpt.optimizer.learning_rate = config.learning_rate;

  std::vector<Eigen::MatrixXf*> param_ptrs;
  ckpt.model.for_each_tensor(
      [&](const std::string&, Eigen::MatrixXf& m) { param_ptrs.push_back(&m); });
  if (ckpt.optimizer.m.empty()) ckpt.optimizer.reset(param_ptrs);

  std::mt19937 rng(config.seed);
  std::uniform_int_distribution<int> pick(0, int(ds.train_indices.size()) - 1);
  std::unordered_map<int, WorkingSet> ws_cache;

  std::ofstream history;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    history.open(fs::path(out_dir) / "history.jsonl", std::ios::app);
  }

  const LossConfig loss_cfg{config.lambda};
  for (int step = 0; step < config.steps; ++step) {
    const int target = ds.train_indices[pick(rng)];
    auto cached = ws_cache.find(target);
    if (cached == ws_cache.end()) {
      const WorkingSet ws =
          choose_working_set(ds, train_sources_excluding(ds, target),
                             ds.views[target].pose.translation, config.toggles.view_selection);
      cached = ws_cache.emplace(target, ws).first;
    }
    const WorkingSet& ws = cached->second;

    Tape<float> tape;
    ad::ModelVars<float> mv = ad::push_model(tape, ckpt.model, /*trainable=*/true);
    auto views = push_sources(tape, mv, ds, ws);
    RenderStats stats;
    MarchOptions opt = make_march_options(ds, ckpt.model,
                                          config.toggles.reset_recurrent_between_levels, &stats);
    const SceneView& tv = ds.views[target];
    ad::RenderGraph<float> graph =
        ad::render_graph(tape, mv.marcher, mv.renderer, tv.intrinsics, tv.pose, views,
                         ws_weights(ws), config.schedule, opt);
    Var<float> truth = tape.constant(tv.image.data, tv.image.height, tv.image.width);
    Var<float> loss = config.toggles.use_confidence_loss
                          ? ad::confidence_loss(truth, graph.color, graph.confidence, loss_cfg)
                          : ad::plain_l1(truth, graph.color);
    const double loss_value = double(loss.value()(0, 0));

    if (!std::isfinite(loss_value)) {
      if (!out_dir.empty()) {
        json dump = {{"step", ckpt.step},
                     {"target_view", target},
                     {"loss", "nan"},
                     {"working_set", {ws.view_ids[0], ws.view_ids[1], ws.view_ids[2]}}};
        std::ofstream(fs::path(out_dir) / "nan_dump.json") << dump.dump(2) << "\n";
      }
      throw NanAbortError("train: non-finite loss at step " + std::to_string(ckpt.step));
    }

    tape.backward(loss);
    std::vector<const Eigen::MatrixXf*> grads;
    grads.reserve(mv.tensors.size());
    for (auto& [name, var] : mv.tensors) grads.push_back(&tape.grad(var));
    ckpt.optimizer.step(param_ptrs, grads);
    ++ckpt.step;

    HistoryEntry entry{int(ckpt.step), loss_value, std::nullopt};
    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0)
      entry.psnr = psnr(tv.image.data, graph.color.value());
    result.history.push_back(entry);
    if (history.is_open()) {
      json line = {{"step", entry.step}, {"loss", entry.loss}};
      if (entry.psnr) line["psnr"] = *entry.psnr;
      history << line.dump() << "\n";
    }

    if (!out_dir.empty() && config.checkpoint_every > 0 &&
        (step + 1) % config.checkpoint_every == 0 && step + 1 < config.steps)
      save_checkpoint(
          (fs::path(out_dir) / ("checkpoint_" + std::to_string(ckpt.step) + ".nmvs")).string(),
          ckpt);
  }

  if (!out_dir.empty())
    save_checkpoint((fs::path(out_dir) / "checkpoint_final.nmvs").string(), ckpt);
  return result;
}

RenderOutput render_view(const Checkpoint& ckpt, const SceneDataset& ds, int view_index) {
  if (view_index < 0 || view_index >= int(ds.views.size()))
    throw std::invalid_argument("render_view: view index out of range");
  const WorkingSet ws = choose_working_set(
      ds, train_sources_excluding(ds, view_index), ds.views[view_index].pose.translation,
      ckpt.config.toggles.view_selection);

  Tape<float> tape;
  // Parameters enter as constants: inference builds no gradient graph.
  ModelParams<float>& model = const_cast<Checkpoint&>(ckpt).model;
  ad::ModelVars<float> mv = ad::push_model(tape, model, /*trainable=*/false);
  auto views = push_sources(tape, mv, ds, ws);
  RenderStats stats;
  MarchOptions opt = make_march_options(ds, model,
                                        ckpt.config.toggles.reset_recurrent_between_levels,
                                        &stats);
  const SceneView& tv = ds.views[view_index];
  ad::RenderGraph<float> graph =
      ad::render_graph(tape, mv.marcher, mv.renderer, tv.intrinsics, tv.pose, views,
                       ws_weights(ws), ckpt.config.schedule, opt);
  return materialize(ds, view_index, graph, stats);
}

EvalResult evaluate(const Checkpoint& ckpt, const SceneDataset& ds, const std::string& split,
                    const std::string& artifacts_dir) {
  const std::vector<int>& indices =
      split == "train" ? ds.train_indices : ds.test_indices;
  if (split != "train" && split != "test")
    throw std::invalid_argument("evaluate: split must be train or test");
  if (indices.empty()) throw std::invalid_argument("evaluate: split is empty");

  EvalResult result;
  const LossConfig loss_cfg{ckpt.config.lambda};
  double psnr_sum = 0, ssim_sum = 0, loss_sum = 0;
  int psnr_count = 0;
  for (int idx : indices) {
    RenderOutput out = render_view(ckpt, ds, idx);
    const SceneView& tv = ds.views[idx];
    ViewMetrics m;
    m.view_index = idx;
    m.psnr = psnr(tv.image.data, out.color);
    m.ssim = ssim(tv.image.data, out.color, tv.image.width, tv.image.height);
    m.loss = confidence_loss_value(tv.image.data, out.color, out.confidence, loss_cfg);
    result.per_view.push_back(m);
    if (std::isinf(m.psnr))
      result.any_psnr_inf = true;
    else {
      psnr_sum += m.psnr;
      ++psnr_count;
    }
    ssim_sum += m.ssim;
    loss_sum += m.loss;
    if (!artifacts_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "view_%03d", idx);
      write_render(out, artifacts_dir, name);
    }
  }
  result.psnr_mean = psnr_count ? psnr_sum / psnr_count
                                : std::numeric_limits<double>::infinity();
  result.ssim_mean = ssim_sum / double(result.per_view.size());
  result.loss_mean = loss_sum / double(result.per_view.size());
  return result;
}

}  // namespace nmvs

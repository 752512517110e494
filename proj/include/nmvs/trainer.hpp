// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmvs/model.hpp"
#include "nmvs/objective.hpp"
#include "nmvs/scene_io.hpp"

// End-to-end optimization: per step, render one training view from its
// Delaunay working set and backpropagate the confidence (or plain L1) loss
// through renderer, marcher and U-Net jointly.

namespace nmvs {

/// Raised when the training loss becomes non-finite; the offending step is
/// dumped to <out_dir>/nan_dump.json first.
struct NanAbortError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct HistoryEntry {
  int step = 0;
  double loss = 0;
  std::optional<double> psnr;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<HistoryEntry> history;
};

struct ViewMetrics {
  int view_index = 0;
  double psnr = 0;
  double ssim = 0;
  double loss = 0;
};

struct EvalResult {
  std::vector<ViewMetrics> per_view;
  double psnr_mean = 0;  // +inf entries excluded from the mean, flagged below
  double ssim_mean = 0;
  double loss_mean = 0;
  bool any_psnr_inf = false;
};

/// Working set for a target chosen among `sources` (dataset view indices).
/// method is "delaunay" or "proximity"; returned ids are dataset indices.
WorkingSet choose_working_set(const SceneDataset& dataset, const std::vector<int>& sources,
                              const Eigen::Vector3d& target_center, const std::string& method);

/// March/posenc options derived from dataset bounds and model configuration.
MarchOptions make_march_options(const SceneDataset& dataset, const ModelParams<float>& model,
                                bool reset_recurrent, RenderStats* stats);

/// Trains (or, when `resume` is given, fine-tunes) on the dataset's train
/// split. Writes history.jsonl and periodic checkpoints under out_dir when
/// it is non-empty. Deterministic for a fixed seed and config.
TrainResult train(const SceneDataset& dataset, const TrainConfig& config,
                  const std::string& out_dir, const Checkpoint* resume = nullptr);

/// Renders one dataset view from the training views (leave-one-out when the
/// target itself is a training view).
RenderOutput render_view(const Checkpoint& ckpt, const SceneDataset& dataset, int view_index);

/// Metrics over a split ("train" or "test"); optionally writes render
/// artifacts per view into artifacts_dir.
EvalResult evaluate(const Checkpoint& ckpt, const SceneDataset& dataset, const std::string& split,
                    const std::string& artifacts_dir = "");

}  // namespace nmvs

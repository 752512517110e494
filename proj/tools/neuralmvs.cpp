// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "nmvs/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

void require_path(const std::string& path, const char* what) {
  if (!fs::exists(path))
    throw UsageError(std::string(what) + " does not exist: " + path);
}

std::uint32_t seed_override(std::uint32_t seed) {
  if (const char* env = std::getenv("NEURALMVS_SEED")) return std::uint32_t(std::stoul(env));
  return seed;
}

json metrics_json(const nmvs::EvalResult& eval) {
  json per_view = json::array();
  for (const auto& m : eval.per_view) {
    json entry = {{"view", m.view_index}, {"ssim", m.ssim}, {"loss", m.loss}};
    if (std::isinf(m.psnr))
      entry["psnr"] = "inf";
    else
      entry["psnr"] = m.psnr;
    per_view.push_back(entry);
  }
  json out = {{"per_view", per_view},
              {"ssim_mean", eval.ssim_mean},
              {"loss_mean", eval.loss_mean}};
  if (eval.any_psnr_inf && eval.per_view.size() == 1)
    out["psnr_mean"] = "inf";
  else
    out["psnr_mean"] = eval.psnr_mean;
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"neuralmvs: sparse-view depth reconstruction and novel view synthesis"};
  app.require_subcommand(1);

  // make-toy
  auto* make_toy = app.add_subcommand("make-toy", "Generate a toy dataset with analytic ground truth");
  std::string mt_out, mt_scene = "sphere", mt_res = "64x64", mt_config = "hemisphere";
  int mt_views = 20;
  std::uint32_t mt_seed = 0;
  make_toy->add_option("--out", mt_out, "Output dataset directory")->required();
  make_toy->add_option("--scene", mt_scene, "sphere|plane|two-spheres");
  make_toy->add_option("--views", mt_views, "Number of views (>= 4)");
  make_toy->add_option("--res", mt_res, "Resolution WxH, divisible by 8");
  make_toy->add_option("--config", mt_config, "hemisphere|fronto-parallel");
  make_toy->add_option("--seed", mt_seed, "RNG seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train on a dataset's train split");
  std::string tr_data, tr_config, tr_out, tr_resume;
  train_cmd->add_option("--data", tr_data, "Dataset directory")->required();
  train_cmd->add_option("--config", tr_config, "Train config JSON")->required();
  train_cmd->add_option("--out", tr_out, "Output directory")->required();
  train_cmd->add_option("--resume", tr_resume, "Checkpoint to fine-tune from");

  // render
  auto* render_cmd = app.add_subcommand("render", "Render one dataset view from a checkpoint");
  std::string rd_ckpt, rd_data, rd_out;
  int rd_view = 0;
  render_cmd->add_option("--checkpoint", rd_ckpt, "Checkpoint file")->required();
  render_cmd->add_option("--data", rd_data, "Dataset directory")->required();
  render_cmd->add_option("--view-index", rd_view, "Target view index")->required();
  render_cmd->add_option("--out", rd_out, "Output directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_out;
  eval_cmd->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", ev_data, "Dataset directory")->required();
  eval_cmd->add_option("--split", ev_split, "train|test");
  eval_cmd->add_option("--out", ev_out, "Metrics JSON output file")->required();

  // select-views
  auto* sel_cmd = app.add_subcommand("select-views", "Emit the working set for a target view");
  std::string sv_data, sv_out;
  int sv_target = 0;
  sel_cmd->add_option("--data", sv_data, "Dataset directory")->required();
  sel_cmd->add_option("--target-index", sv_target, "Target view index")->required();
  sel_cmd->add_option("--out", sv_out, "Output JSON file")->required();

  // ablate
  auto* abl_cmd = app.add_subcommand("ablate", "Train and compare the ablation variants");
  std::string ab_data, ab_config, ab_out;
  abl_cmd->add_option("--data", ab_data, "Dataset directory")->required();
  abl_cmd->add_option("--config", ab_config, "Base train config JSON")->required();
  abl_cmd->add_option("--out", ab_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (make_toy->parsed()) {
    nmvs::ToySceneSpec spec;
    auto prim = nmvs::toy_primitive_from_string(mt_scene);
    if (!prim) throw UsageError("unknown scene: " + mt_scene);
    spec.primitive = *prim;
    if (mt_config == "hemisphere")
      spec.configuration = nmvs::ViewConfiguration::kHemisphere;
    else if (mt_config == "fronto-parallel")
      spec.configuration = nmvs::ViewConfiguration::kFrontoParallel;
    else
      throw UsageError("unknown configuration: " + mt_config);
    if (std::sscanf(mt_res.c_str(), "%dx%d", &spec.width, &spec.height) != 2)
      throw UsageError("resolution must look like 64x64");
    spec.num_views = mt_views;
    spec.seed = mt_seed;
    spec.validate();
    nmvs::SceneDataset ds = nmvs::generate_toy_scene(spec, mt_out);
    std::printf("wrote %zu views (%dx%d, near %.4f, far %.4f) to %s\n", ds.views.size(),
                spec.width, spec.height, ds.near, ds.far, mt_out.c_str());
    return 0;
  }

  if (train_cmd->parsed()) {
    require_path(tr_data, "--data");
    require_path(tr_config, "--config");
    nmvs::TrainConfig config = nmvs::train_config_from_json_file(tr_config);
    config.seed = seed_override(config.seed);
    nmvs::SceneDataset ds = nmvs::load_native(tr_data);
    std::optional<nmvs::Checkpoint> resume;
    if (!tr_resume.empty()) {
      require_path(tr_resume, "--resume");
      resume = nmvs::load_checkpoint(tr_resume);
    }
    nmvs::TrainResult res = nmvs::train(ds, config, tr_out, resume ? &*resume : nullptr);
    std::printf("trained %d steps; final loss %.6f; checkpoint %s\n", config.steps,
                res.history.empty() ? 0.0 : res.history.back().loss,
                (fs::path(tr_out) / "checkpoint_final.nmvs").c_str());
    return 0;
  }

  if (render_cmd->parsed()) {
    require_path(rd_ckpt, "--checkpoint");
    require_path(rd_data, "--data");
    nmvs::Checkpoint ckpt = nmvs::load_checkpoint(rd_ckpt);
    nmvs::SceneDataset ds = nmvs::load_native(rd_data);
    if (rd_view < 0 || rd_view >= int(ds.views.size()))
      throw UsageError("--view-index out of range");
    nmvs::RenderOutput out = nmvs::render_view(ckpt, ds, rd_view);
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03d", rd_view);
    nmvs::write_render(out, rd_out, name);
    std::printf("wrote %s/%s_{color.png,depth.pfm,conf.png}\n", rd_out.c_str(), name);
    return 0;
  }

  if (eval_cmd->parsed()) {
    require_path(ev_ckpt, "--checkpoint");
    require_path(ev_data, "--data");
    if (ev_split != "train" && ev_split != "test") throw UsageError("--split must be train or test");
    nmvs::Checkpoint ckpt = nmvs::load_checkpoint(ev_ckpt);
    nmvs::SceneDataset ds = nmvs::load_native(ev_data);
    nmvs::EvalResult eval = nmvs::evaluate(ckpt, ds, ev_split);
    std::ofstream out(ev_out);
    out << metrics_json(eval).dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write " + ev_out);
    std::printf("%s split: psnr_mean %.3f  ssim_mean %.4f -> %s\n", ev_split.c_str(),
                eval.psnr_mean, eval.ssim_mean, ev_out.c_str());
    return 0;
  }

  if (sel_cmd->parsed()) {
    require_path(sv_data, "--data");
    nmvs::SceneDataset ds = nmvs::load_native(sv_data);
    if (sv_target < 0 || sv_target >= int(ds.views.size()))
      throw UsageError("--target-index out of range");
    std::vector<int> sources;
    for (int i = 0; i < int(ds.views.size()); ++i)
      if (i != sv_target) sources.push_back(i);
    std::vector<Eigen::Vector3d> centers;
    for (int i : sources) centers.push_back(ds.views[i].pose.translation);
    nmvs::ViewConstellation con = nmvs::build_constellation(centers);
    nmvs::WorkingSet ws = nmvs::select_working_set(con, ds.views[sv_target].pose.translation);

    json projected = json::array(), triangles = json::array(), src = json::array();
    for (const auto& p : con.projected) projected.push_back({p.x(), p.y()});
    for (const auto& t : con.triangles) triangles.push_back({t.v[0], t.v[1], t.v[2]});
    for (int i : sources) src.push_back(i);
    json out = {{"configuration", nmvs::to_string(con.configuration)},
                {"projected", projected},
                {"triangles", triangles},
                {"sources", src},
                {"selected",
                 {{"view_ids",
                   {sources[ws.view_ids[0]], sources[ws.view_ids[1]], sources[ws.view_ids[2]]}},
                  {"weights", {ws.weights[0], ws.weights[1], ws.weights[2]}}}}};
    std::ofstream file(sv_out);
    file << out.dump(2) << "\n";
    if (!file) throw std::runtime_error("cannot write " + sv_out);
    std::printf("working set for view %d: [%d, %d, %d] -> %s\n", sv_target,
                sources[ws.view_ids[0]], sources[ws.view_ids[1]], sources[ws.view_ids[2]],
                sv_out.c_str());
    return 0;
  }

  if (abl_cmd->parsed()) {
    require_path(ab_data, "--data");
    require_path(ab_config, "--config");
    const nmvs::TrainConfig base = [&] {
      nmvs::TrainConfig c = nmvs::train_config_from_json_file(ab_config);
      c.seed = seed_override(c.seed);
      return c;
    }();
    nmvs::SceneDataset ds = nmvs::load_native(ab_data);

    auto variant = [&](const std::string& name) {
      nmvs::TrainConfig c = base;
      if (name == "no_posenc") c.toggles.use_posenc = false;
      if (name == "no_delaunay") c.toggles.view_selection = "proximity";
      if (name == "conv1x1") c.toggles.conv_kernel = 1;
      if (name == "fewer_steps") c.schedule.levels = {{4, 5}, {2, 3}, {1, 1}};
      return c;
    };

    json table;
    for (const std::string& name :
         {"complete", "no_posenc", "no_delaunay", "fewer_steps", "conv1x1"}) {
      const std::string dir = (fs::path(ab_out) / name).string();
      std::printf("[ablate] training %s...\n", name.c_str());
      nmvs::TrainResult res = nmvs::train(ds, variant(name), dir);
      nmvs::EvalResult eval = nmvs::evaluate(res.checkpoint, ds, "test");
      table[name] = {{"psnr_mean", eval.psnr_mean},
                     {"ssim_mean", eval.ssim_mean},
                     {"loss_mean", eval.loss_mean}};
      std::printf("[ablate] %s: psnr %.3f ssim %.4f\n", name.c_str(), eval.psnr_mean,
                  eval.ssim_mean);
    }
    fs::create_directories(ab_out);
    std::ofstream file(fs::path(ab_out) / "ablation.json");
    file << table.dump(2) << "\n";
    if (!file) throw std::runtime_error("cannot write ablation.json");
    std::printf("wrote %s/ablation.json\n", ab_out.c_str());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

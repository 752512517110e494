// Copyright (c) 2026 the neuralmvs authors
// SPDX-License-Identifier: Apache-2.0

#include <json.hpp>

#include <cstring>
#include <fstream>

#include "nmvs/model.hpp"

using json = nlohmann::json;

namespace nmvs {

namespace {

constexpr char kMagic[8] = {'N', 'M', 'V', 'S', 'C', 'K', 'P', 'T'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Eigen::MatrixXf& m) {
  write_u32(out, std::uint32_t(name.size()));
  out.write(name.data(), std::streamsize(name.size()));
  write_u32(out, std::uint32_t(m.rows()));
  write_u32(out, std::uint32_t(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()), std::streamsize(m.size()) * 4);
}

Eigen::MatrixXf read_tensor(std::istream& in, std::string& name) {
  const std::uint32_t len = read_u32(in);
  name.resize(len);
  in.read(name.data(), len);
  const std::uint32_t rows = read_u32(in), cols = read_u32(in);
  Eigen::MatrixXf m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), std::streamsize(m.size()) * 4);
  return m;
}

json schedule_to_json(const MarchSchedule& s) {
  json arr = json::array();
  for (auto& [scale, steps] : s.levels) arr.push_back({scale, steps});
  return arr;
}

MarchSchedule schedule_from_json(const json& arr) {
  MarchSchedule s;
  s.levels.clear();
  for (const auto& level : arr)
    s.levels.emplace_back(level.at(0).get<int>(), level.at(1).get<int>());
  return s;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) {
  json toggles = {{"use_posenc", cfg.toggles.use_posenc},
                  {"view_selection", cfg.toggles.view_selection},
                  {"conv_kernel", cfg.toggles.conv_kernel},
                  {"reset_recurrent_between_levels", cfg.toggles.reset_recurrent_between_levels},
                  {"use_confidence_loss", cfg.toggles.use_confidence_loss}};
  json root = {{"steps", cfg.steps},
               {"learning_rate", cfg.learning_rate},
               {"seed", cfg.seed},
               {"lambda", cfg.lambda},
               {"schedule", schedule_to_json(cfg.schedule)},
               {"toggles", toggles},
               {"checkpoint_every", cfg.checkpoint_every},
               {"eval_every", cfg.eval_every},
               {"posenc_frequencies", cfg.posenc_frequencies}};
  return root.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  TrainConfig cfg;
  json doc;
  try {
    doc = json::parse(text);
    cfg.steps = doc.value("steps", cfg.steps);
    cfg.learning_rate = doc.value("learning_rate", cfg.learning_rate);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.lambda = doc.value("lambda", cfg.lambda);
    if (doc.contains("schedule")) cfg.schedule = schedule_from_json(doc["schedule"]);
    if (doc.contains("toggles")) {
      const json& t = doc["toggles"];
      cfg.toggles.use_posenc = t.value("use_posenc", cfg.toggles.use_posenc);
      cfg.toggles.view_selection = t.value("view_selection", cfg.toggles.view_selection);
      cfg.toggles.conv_kernel = t.value("conv_kernel", cfg.toggles.conv_kernel);
      cfg.toggles.reset_recurrent_between_levels =
          t.value("reset_recurrent_between_levels", cfg.toggles.reset_recurrent_between_levels);
      cfg.toggles.use_confidence_loss =
          t.value("use_confidence_loss", cfg.toggles.use_confidence_loss);
    }
    cfg.checkpoint_every = doc.value("checkpoint_every", cfg.checkpoint_every);
    cfg.eval_every = doc.value("eval_every", cfg.eval_every);
    cfg.posenc_frequencies = doc.value("posenc_frequencies", cfg.posenc_frequencies);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("config: malformed JSON: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TrainConfig train_config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return train_config_from_json(text);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, 8);
  write_u32(out, kCheckpointVersion);
  const std::string cfg = train_config_to_json(ckpt.config);
  write_u64(out, cfg.size());
  out.write(cfg.data(), std::streamsize(cfg.size()));
  out.write(reinterpret_cast<const char*>(&ckpt.scene_far), 8);
  write_u64(out, std::uint64_t(ckpt.step));
  write_u64(out, std::uint64_t(ckpt.optimizer.step_count));

  std::vector<std::pair<std::string, const Eigen::MatrixXf*>> tensors;
  ckpt.model.for_each_tensor(
      [&](const std::string& name, const Eigen::MatrixXf& m) { tensors.emplace_back(name, &m); });
  if (ckpt.optimizer.m.size() != 0 && ckpt.optimizer.m.size() != tensors.size())
    throw std::runtime_error("checkpoint: optimizer slots do not match the model");

  write_u32(out, std::uint32_t(tensors.size()));
  write_u32(out, std::uint32_t(ckpt.optimizer.m.size()));
  for (size_t i = 0; i < tensors.size(); ++i) {
    write_tensor(out, tensors[i].first, *tensors[i].second);
    if (!ckpt.optimizer.m.empty()) {
      write_tensor(out, "adam.m", ckpt.optimizer.m[i]);
      write_tensor(out, "adam.v", ckpt.optimizer.v[i]);
    }
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  const std::uint64_t cfg_len = read_u64(in);
  std::string cfg(cfg_len, '\0');
  in.read(cfg.data(), std::streamsize(cfg_len));
  ckpt.config = train_config_from_json(cfg);
  in.read(reinterpret_cast<char*>(&ckpt.scene_far), 8);
  ckpt.step = std::int64_t(read_u64(in));
  const std::int64_t opt_steps = std::int64_t(read_u64(in));

  ckpt.model = ModelParams<float>::init(ckpt.config, ckpt.scene_far);
  const std::uint32_t n_tensors = read_u32(in);
  const std::uint32_t n_slots = read_u32(in);

  std::vector<std::pair<std::string, Eigen::MatrixXf*>> tensors;
  ckpt.model.for_each_tensor(
      [&](const std::string& name, Eigen::MatrixXf& m) { tensors.emplace_back(name, &m); });
  if (n_tensors != tensors.size())
    throw std::runtime_error("checkpoint: tensor count does not match the config architecture");

  ckpt.optimizer.step_count = opt_steps;
  for (size_t i = 0; i < tensors.size(); ++i) {
    std::string name;
    Eigen::MatrixXf m = read_tensor(in, name);
    if (name != tensors[i].first || m.rows() != tensors[i].second->rows() ||
        m.cols() != tensors[i].second->cols())
      throw std::runtime_error("checkpoint: tensor " + name + " does not match the architecture");
    *tensors[i].second = std::move(m);
    if (n_slots) {
      ckpt.optimizer.m.push_back(read_tensor(in, name));
      ckpt.optimizer.v.push_back(read_tensor(in, name));
    }
  }
  if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
  return ckpt;
}

}  // namespace nmvs

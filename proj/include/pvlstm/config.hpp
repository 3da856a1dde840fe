#pragma once

#include <filesystem>
#include <string>

#include "pvlstm/baselines.hpp"
#include "pvlstm/model.hpp"

namespace pvlstm {

struct SchedulerConfig {
  double factor = 0.5;
  int patience = 5;
  double min_lr = 1e-6;
};

enum class MseTarget { Velocity, Box };
enum class NormalizeMode { None, Affine };

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 100;
  Index batch_size = 128;
  double loss_weight_box = 1.0;
  double loss_weight_intention = 1.0;
  SchedulerConfig scheduler;
  std::uint64_t seed = 42;
  ModelConfig model;
  WindowConfig window;
  // The box loss supervises velocities (the decoder's direct output) by
  // default; `box` integrates first and supervises coordinates instead.
  MseTarget mse_target = MseTarget::Velocity;
  NormalizeMode normalize = NormalizeMode::None;

  void validate() const;
};

struct SplitConfig {
  std::size_t train_video_count = 300;
  double val_video_fraction = 0.1;  // last fraction of train videos
};

struct BaselineParams {
  CvcsVelocityMode cvcs_velocity = CvcsVelocityMode::Mean;
  LkfConfig lkf;
};

/// Everything a run needs, parsed from one flat key=value file.
struct RunConfig {
  TrainConfig train;
  SplitConfig split;
  BaselineParams baselines;
};

/// Parses flat key=value lines; `#` starts a comment, blank lines are
/// ignored. Unknown or duplicate keys fail with the offending line. Missing
/// keys keep their documented defaults.
RunConfig parse_run_config(const std::string& text, const std::string& origin);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical serialization: every key, fixed order. Parsing it back yields
/// an identical config.
std::string serialize_run_config(const RunConfig& config);

}  // namespace pvlstm

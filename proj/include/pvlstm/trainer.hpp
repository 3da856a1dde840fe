#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "pvlstm/config.hpp"
#include "pvlstm/metrics.hpp"
#include "pvlstm/model.hpp"

namespace pvlstm {

/// Mutable loop state; checkpointed so that a resumed run continues the
/// uninterrupted one exactly. All scheduler arithmetic is float so the
/// state round-trips through the float32 checkpoint records bit-exactly.
struct TrainerState {
  float lr = 0;
  float best_val = std::numeric_limits<float>::infinity();
  std::int32_t plateau = 0;
  std::int32_t epoch = 0;  // completed epochs
};

struct StepLosses {
  double box = 0;
  double intention = 0;
};

/// Unweighted per-task losses for one assembled batch, forward only.
StepLosses compute_batch_losses(const ModelParameters& params,
                                const Batch& batch, const TrainConfig& config);

/// Same, but also backpropagates the weighted total loss into the parameter
/// gradients (accumulating; caller zeroes beforehand).
StepLosses compute_batch_gradients(ModelParameters& params, const Batch& batch,
                                   const TrainConfig& config);

double weighted_total(const StepLosses& losses, const TrainConfig& config);

/// One optimizer step on one batch: forward, weighted MSE+BCE gradients,
/// BPTT, Adam on every block. Returns the unweighted per-task losses.
StepLosses train_step(ModelParameters& params,
                      const std::vector<SequenceWindow>& windows,
                      std::span<const std::size_t> indices,
                      const TrainConfig& config, const NormalizationParams& norm,
                      Scalar learning_rate);

/// Forward-only losses over a window set (scheduler input).
StepLosses evaluate_losses(const ModelParameters& params,
                           const std::vector<SequenceWindow>& windows,
                           const TrainConfig& config,
                           const NormalizationParams& norm);

/// Forward pass over a window set; boxes in raw pixel space via integration
/// (or direct decoding for the position-only ablation).
MetricsReport evaluate(const ModelParameters& params,
                       const std::vector<SequenceWindow>& windows,
                       const TrainConfig& config, const NormalizationParams& norm);

struct EpochLogRow {
  int epoch = 0;
  float lr = 0;
  double loss_box = 0;
  double loss_int = 0;
  MetricsReport val;

  static std::string csv_header();
  std::string to_csv_row() const;
};

struct FitResult {
  std::vector<EpochLogRow> log;
  TrainerState state;
  NormalizationParams norm;
};

/// Epoch loop: seeded reshuffle per epoch (derived from seed and epoch
/// index, so resumed runs shuffle identically), reduce-on-plateau on the
/// validation total loss, one log row per epoch. With an empty validation
/// set the train windows stand in for it.
///
/// `resume` continues from a checkpointed state; epochs already completed
/// are skipped. `after_epoch` runs after each epoch's log row is final.
FitResult fit(ModelParameters& params, const std::vector<SequenceWindow>& train,
              const std::vector<SequenceWindow>& validation,
              const TrainConfig& config,
              std::optional<TrainerState> resume = std::nullopt,
              std::optional<NormalizationParams> resume_norm = std::nullopt,
              const std::function<void(const EpochLogRow&)>& after_epoch = {});

// ---------------------------------------------------------------------------
// Checkpoints: magic "PVLS", u32 LE version, length-prefixed config text,
// then named float32 arrays (values, Adam moments, step counts, trainer
// state, normalization). Bit-exact round trip.
// ---------------------------------------------------------------------------

struct CheckpointData {
  RunConfig config;
  ModelParameters params;
  TrainerState state;
  NormalizationParams norm;
};

void save_checkpoint(const std::filesystem::path& path,
                     const ModelParameters& params, const RunConfig& config,
                     const TrainerState& state, const NormalizationParams& norm);

/// Loads and validates a checkpoint; throws ParseError on corruption and
/// ConfigError when the stored arrays do not realize the stored config.
CheckpointData load_checkpoint(const std::filesystem::path& path);

/// Guard for loading into an existing setup: throws ConfigError when the
/// architectures differ.
void require_same_model(const ModelConfig& expected, const ModelConfig& actual);

}  // namespace pvlstm

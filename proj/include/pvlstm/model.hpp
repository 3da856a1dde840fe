#pragma once

#include <span>
#include <string>
#include <vector>

#include "pvlstm/dataio.hpp"
#include "pvlstm/lstm.hpp"

namespace pvlstm {

enum class Task { BoxOnly, IntentionOnly, MultiTask };
enum class InputFeatures { Box, CenterOnly };
enum class EncoderSet { PositionVelocity, VelocityOnly, PositionOnly };

/// Architecture switches. The defaults are the full multi-task model;
/// the enum combinations realize the published ablations:
///   Velocity-LSTM   = { BoxOnly, Box, VelocityOnly }
///   Position-LSTM   = { BoxOnly, Box, PositionOnly } (decodes absolute boxes)
///   Trajectory-LSTM = { MultiTask, CenterOnly, PositionVelocity }
struct ModelConfig {
  Index hidden_size = 256;
  Index t_obs = 18;
  Index t_pred = 18;
  Task task = Task::MultiTask;
  InputFeatures input_features = InputFeatures::Box;
  EncoderSet encoders = EncoderSet::PositionVelocity;

  Index feature_dim() const {
    return input_features == InputFeatures::CenterOnly ? 2 : 4;
  }
  // Both encoder final states are concatenated, so the decoders run at 2H.
  Index decoder_hidden() const { return 2 * hidden_size; }

  bool wants_boxes() const { return task != Task::IntentionOnly; }
  bool wants_intention() const { return task != Task::BoxOnly; }
  // The position-only ablation re-targets the box decoder to absolute
  // coordinates; everything else decodes velocities and integrates.
  bool predicts_absolute_boxes() const {
    return encoders == EncoderSet::PositionOnly;
  }

  void validate() const;
};

std::string task_name(Task t);
std::string input_features_name(InputFeatures f);
std::string encoder_set_name(EncoderSet e);

/// Affine per-component input normalization (identity by default).
/// Boxes map to (b - mean) / std, velocities to v / std; fitted on the
/// train split only.
struct NormalizationParams {
  Eigen::Array4f mean = Eigen::Array4f::Zero();
  Eigen::Array4f stdev = Eigen::Array4f::Ones();

  bool identity() const;
};

NormalizationParams compute_normalization(
    const std::vector<SequenceWindow>& train_windows);

/// Fully connected output layer, out = W x + b applied column-wise.
struct LinearHead {
  ParamBlock weight;  // out x in
  ParamBlock bias;    // out x 1

  Matrix apply(const Matrix& x) const {
    // Column-at-a-time for exact batch independence (see lstm_cell).
    Matrix out(weight.value.rows(), x.cols());
    for (Index b = 0; b < x.cols(); ++b) {
      out.col(b).noalias() = weight.value * x.col(b);
      out.col(b) += bias.value.col(0);
    }
    return out;
  }
};

/// All learnable state of the network: two encoders (hidden H), two
/// decoders (hidden 2H), the two output heads, and the embedding that maps
/// a predicted intention distribution back to decoder input width.
struct ModelParameters {
  LstmCellParams enc_velocity;
  LstmCellParams enc_position;
  LstmCellParams dec_velocity;
  LstmCellParams dec_intention;
  LinearHead out_velocity;        // 2H -> feature_dim
  LinearHead out_intention;       // 2H -> 2
  LinearHead intention_embedding; // 2  -> feature_dim

  /// Every block in a fixed, documented order (checkpoint and optimizer
  /// iteration order).
  std::vector<ParamBlock*> blocks();
  std::vector<const ParamBlock*> blocks() const;

  void zero_grads();
};

/// Fresh parameters, uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] drawn
/// from the seed in block order.
ModelParameters make_parameters(const ModelConfig& config, std::uint64_t seed);

/// Zero-valued parameters with the right shapes (useful as a degenerate
/// reference: zero velocities, uniform intentions).
ModelParameters make_zero_parameters(const ModelConfig& config);

/// Throws ConfigError if the parameter shapes do not realize the config.
void validate_parameters(const ModelParameters& params,
                         const ModelConfig& config);

/// Concatenates two encoder states (position first). Both inputs must share
/// the same hidden size; cell states are concatenated alongside the hidden
/// states so the decoders start with the full encoder memory.
HiddenState fuse_hidden(const HiddenState& position, const HiddenState& velocity);

struct DecoderCache {
  std::vector<LstmStepCache> steps;
};

/// Iterative decoder for the box head. Step 1 consumes `first_input` (the
/// last observed velocity, or the last observed box when decoding absolute
/// coordinates); every later step consumes the previous prediction.
std::vector<Matrix> decode_velocity(const HiddenState& initial,
                                    const Matrix& first_input, Index t_pred,
                                    const LstmCellParams& cell,
                                    const LinearHead& head,
                                    DecoderCache* cache = nullptr);

/// Gradient of decode_velocity. Returns the gradient w.r.t. the initial
/// state; parameter gradients accumulate in place.
HiddenState decode_velocity_backward(const DecoderCache& cache,
                                     const std::vector<Matrix>& d_outputs,
                                     LstmCellParams& cell, LinearHead& head);

/// Iterative intention decoder. Step 1 consumes the last observed box; later
/// steps embed the previous predicted distribution. Each output column is a
/// softmax distribution over {non-crossing, crossing}.
std::vector<Matrix> decode_intention(const HiddenState& initial,
                                     const Matrix& last_box, Index t_pred,
                                     const LstmCellParams& cell,
                                     const LinearHead& head,
                                     const LinearHead& embedding,
                                     DecoderCache* cache = nullptr);

HiddenState decode_intention_backward(const DecoderCache& cache,
                                      const std::vector<Matrix>& probs,
                                      const std::vector<Matrix>& d_probs,
                                      LstmCellParams& cell, LinearHead& head,
                                      LinearHead& embedding);

/// Cumulative addition of velocities onto the last observed box.
/// Accumulates in double so that integrating derived velocities restores
/// the original sequence bit-for-bit.
std::vector<BoundingBox> integrate_boxes(const BoundingBox& last_box,
                                         const std::vector<BoxVelocity>& velocities);

/// Batched form: last_box and each velocity are (dim x batch).
std::vector<Matrix> integrate_boxes(const Matrix& last_box,
                                    const std::vector<Matrix>& velocities);

// ---------------------------------------------------------------------------
// Batched forward/backward over assembled windows.
// ---------------------------------------------------------------------------

/// One batch in feature space, windows as columns.
struct Batch {
  std::vector<Matrix> obs_boxes;         // t_obs x (feat x B), normalized
  std::vector<Matrix> obs_velocities;    // t_obs-1 x (feat x B), normalized
  std::vector<Matrix> target_velocities; // t_pred x (feat x B), normalized
  std::vector<Matrix> target_boxes;      // t_pred x (feat x B), normalized
  std::vector<Matrix> target_labels;     // t_pred x (2 x B), one-hot
  Matrix last_box_raw;                   // 4 x B, raw pixels
  std::vector<std::string> provenance;   // "video/ped@frame" per column

  Index batch_size() const { return last_box_raw.cols(); }
};

Batch assemble_batch(const std::vector<SequenceWindow>& windows,
                     std::span<const std::size_t> indices,
                     const ModelConfig& config, const NormalizationParams& norm);
Batch assemble_batch(const std::vector<SequenceWindow>& windows,
                     const ModelConfig& config, const NormalizationParams& norm);

struct ForwardCache {
  std::vector<LstmStepCache> enc_velocity;
  std::vector<LstmStepCache> enc_position;
  DecoderCache dec_velocity;
  DecoderCache dec_intention;
};

struct ForwardResult {
  /// t_pred x (feat x B): predicted velocities, or absolute boxes when
  /// config.predicts_absolute_boxes(). Empty for intention-only.
  std::vector<Matrix> outputs;
  /// t_pred x (2 x B) softmax distributions. Empty for box-only.
  std::vector<Matrix> intention_probs;
};

ForwardResult forward(const Batch& batch, const ModelParameters& params,
                      const ModelConfig& config, ForwardCache* cache = nullptr);

/// Accumulates parameter gradients for d(loss)/d(outputs) and
/// d(loss)/d(probs); either list may be empty when the corresponding head
/// is disabled or unsupervised.
void backward(const ForwardCache& cache, const ForwardResult& result,
              const std::vector<Matrix>& d_outputs,
              const std::vector<Matrix>& d_probs, ModelParameters& params,
              const ModelConfig& config);

/// Predicted boxes in raw pixel space for each window of the batch
/// (denormalizes, integrates velocities unless the config decodes absolute
/// boxes, and holds width/height at the last observation in center-only
/// mode).
std::vector<std::vector<BoundingBox>> predicted_boxes(
    const Batch& batch, const ForwardResult& result, const ModelConfig& config,
    const NormalizationParams& norm);

}  // namespace pvlstm

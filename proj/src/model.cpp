#include "pvlstm/model.hpp"

#include <cmath>
#include <random>

namespace pvlstm {

namespace {

// 24 high bits of a mt19937_64 draw -> [0,1); portable across stdlibs,
// unlike std::uniform_real_distribution.
Scalar canonical_unit(std::mt19937_64& rng) {
  return Scalar(rng() >> 40) * Scalar(1.0 / 16777216.0);
}

void init_uniform(ParamBlock& block, Index fan_in, std::mt19937_64& rng) {
  const Scalar bound = Scalar(1.0 / std::sqrt(double(fan_in)));
  for (Index k = 0; k < block.value.size(); ++k) {
    block.value.data()[k] = (2 * canonical_unit(rng) - 1) * bound;
  }
}

Matrix softmax_cols_backward(const Matrix& p, const Matrix& dp) {
  Matrix dz(p.rows(), p.cols());
  for (Index c = 0; c < p.cols(); ++c) {
    const auto pc = p.col(c).array();
    const auto dpc = dp.col(c).array();
    const Scalar dot = (pc * dpc).sum();
    dz.col(c) = (pc * (dpc - dot)).matrix();
  }
  return dz;
}

// Decoder-step hidden state; the cell cache keeps factors, not h itself.
Matrix step_hidden(const LstmStepCache& step) {
  return (step.o.array() * step.tanh_c.array()).matrix();
}

void head_backward(LinearHead& head, const Matrix& h, const Matrix& d_out,
                   Matrix& dh) {
  head.weight.grad.noalias() += d_out * h.transpose();
  head.bias.grad.col(0) += d_out.rowwise().sum();
  dh.noalias() += head.weight.value.transpose() * d_out;
}

Eigen::Array4f feature_slice(const NormalizationParams& norm, bool mean,
                             Index feat) {
  Eigen::Array4f out = mean ? norm.mean : norm.stdev;
  if (feat == 2 && !mean) {
    out(2) = 1;
    out(3) = 1;
  }
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (hidden_size < 1) throw ConfigError("model: hidden_size must be >= 1");
  if (t_obs < 2) throw ConfigError("model: t_obs must be >= 2");
  if (t_pred < 1) throw ConfigError("model: t_pred must be >= 1");
}

std::string task_name(Task t) {
  switch (t) {
    case Task::BoxOnly: return "box-only";
    case Task::IntentionOnly: return "intention-only";
    case Task::MultiTask: return "multi-task";
  }
  return "?";
}

std::string input_features_name(InputFeatures f) {
  return f == InputFeatures::CenterOnly ? "center-only" : "box";
}

std::string encoder_set_name(EncoderSet e) {
  switch (e) {
    case EncoderSet::PositionVelocity: return "position+velocity";
    case EncoderSet::VelocityOnly: return "velocity-only";
    case EncoderSet::PositionOnly: return "position-only";
  }
  return "?";
}

bool NormalizationParams::identity() const {
  return (mean == 0.0f).all() && (stdev == 1.0f).all();
}

NormalizationParams compute_normalization(
    const std::vector<SequenceWindow>& train_windows) {
  Eigen::Array4d sum = Eigen::Array4d::Zero();
  Eigen::Array4d sum_sq = Eigen::Array4d::Zero();
  double n = 0;
  auto accumulate = [&](const BoundingBox& b) {
    const Eigen::Array4d v(b.x_center, b.y_center, b.width, b.height);
    sum += v;
    sum_sq += v.square();
    n += 1;
  };
  for (const auto& w : train_windows) {
    for (const auto& b : w.obs_boxes) accumulate(b);
    for (const auto& b : w.future_boxes) accumulate(b);
  }
  if (n == 0) throw ValidationError("compute_normalization: no boxes");

  NormalizationParams norm;
  const Eigen::Array4d mean = sum / n;
  const Eigen::Array4d var = (sum_sq / n - mean.square()).max(0.0);
  norm.mean = mean.cast<float>();
  norm.stdev = var.sqrt().max(1e-6).cast<float>();
  return norm;
}

std::vector<ParamBlock*> ModelParameters::blocks() {
  std::vector<ParamBlock*> out;
  for (LstmCellParams* cell :
       {&enc_velocity, &enc_position, &dec_velocity, &dec_intention}) {
    for (ParamBlock* b : cell->blocks()) out.push_back(b);
  }
  for (LinearHead* head : {&out_velocity, &out_intention, &intention_embedding}) {
    out.push_back(&head->weight);
    out.push_back(&head->bias);
  }
  return out;
}

std::vector<const ParamBlock*> ModelParameters::blocks() const {
  auto mutable_blocks = const_cast<ModelParameters*>(this)->blocks();
  return {mutable_blocks.begin(), mutable_blocks.end()};
}

void ModelParameters::zero_grads() {
  for (ParamBlock* b : blocks()) b->zero_grad();
}

ModelParameters make_zero_parameters(const ModelConfig& config) {
  config.validate();
  const Index feat = config.feature_dim();
  const Index enc_h = config.hidden_size;
  const Index dec_h = config.decoder_hidden();

  ModelParameters p;
  p.enc_velocity = make_lstm_params("enc_velocity", enc_h, feat);
  p.enc_position = make_lstm_params("enc_position", enc_h, feat);
  p.dec_velocity = make_lstm_params("dec_velocity", dec_h, feat);
  p.dec_intention = make_lstm_params("dec_intention", dec_h, feat);
  p.out_velocity = {ParamBlock("out_velocity.W", feat, dec_h),
                    ParamBlock("out_velocity.b", feat, 1)};
  p.out_intention = {ParamBlock("out_intention.W", 2, dec_h),
                     ParamBlock("out_intention.b", 2, 1)};
  p.intention_embedding = {ParamBlock("intention_embedding.W", feat, 2),
                           ParamBlock("intention_embedding.b", feat, 1)};
  return p;
}

ModelParameters make_parameters(const ModelConfig& config, std::uint64_t seed) {
  ModelParameters p = make_zero_parameters(config);
  std::mt19937_64 rng(seed);

  for (LstmCellParams* cell :
       {&p.enc_velocity, &p.enc_position, &p.dec_velocity, &p.dec_intention}) {
    init_uniform(cell->input_weights, cell->input_dim(), rng);
    init_uniform(cell->recurrent_weights, cell->hidden(), rng);
    init_uniform(cell->bias, cell->hidden(), rng);
  }
  for (LinearHead* head :
       {&p.out_velocity, &p.out_intention, &p.intention_embedding}) {
    init_uniform(head->weight, head->weight.value.cols(), rng);
    init_uniform(head->bias, head->weight.value.cols(), rng);
  }
  return p;
}

void validate_parameters(const ModelParameters& params,
                         const ModelConfig& config) {
  config.validate();
  ModelParameters expected = make_zero_parameters(config);
  auto exp_blocks = expected.blocks();
  auto got_blocks = params.blocks();
  for (std::size_t k = 0; k < exp_blocks.size(); ++k) {
    const auto& e = *exp_blocks[k];
    const auto& g = *got_blocks[k];
    if (e.value.rows() != g.value.rows() || e.value.cols() != g.value.cols()) {
      throw ConfigError("parameters do not match config: block '" + e.name +
                        "' is " + shape_string(g.value) + ", expected " +
                        shape_string(e.value));
    }
  }
}

HiddenState fuse_hidden(const HiddenState& position, const HiddenState& velocity) {
  if (position.h.rows() != velocity.h.rows() ||
      position.h.cols() != velocity.h.cols()) {
    throw DimensionError("fuse_hidden: state shapes differ, " +
                         shape_string(position.h) + " vs " +
                         shape_string(velocity.h));
  }
  const Index hidden = position.h.rows();
  const Index batch = position.h.cols();
  HiddenState fused;
  fused.h.resize(2 * hidden, batch);
  fused.h.topRows(hidden) = position.h;
  fused.h.bottomRows(hidden) = velocity.h;
  fused.c.resize(2 * hidden, batch);
  fused.c.topRows(hidden) = position.c;
  fused.c.bottomRows(hidden) = velocity.c;
  return fused;
}

std::vector<Matrix> decode_velocity(const HiddenState& initial,
                                    const Matrix& first_input, Index t_pred,
                                    const LstmCellParams& cell,
                                    const LinearHead& head,
                                    DecoderCache* cache) {
  if (t_pred < 1) throw ValidationError("decode_velocity: t_pred must be >= 1");
  if (cache != nullptr) cache->steps.resize(std::size_t(t_pred));

  std::vector<Matrix> outputs;
  outputs.reserve(std::size_t(t_pred));
  HiddenState state = initial;
  Matrix x = first_input;
  for (Index k = 0; k < t_pred; ++k) {
    state = lstm_cell(x, state, cell,
                      cache != nullptr ? &cache->steps[std::size_t(k)] : nullptr);
    outputs.push_back(head.apply(state.h));
    x = outputs.back();  // the prediction feeds the next step
  }
  return outputs;
}

HiddenState decode_velocity_backward(const DecoderCache& cache,
                                     const std::vector<Matrix>& d_outputs,
                                     LstmCellParams& cell, LinearHead& head) {
  const Index t_pred = Index(cache.steps.size());
  const Index batch = cache.steps.front().x.cols();
  const Index feat = cell.input_dim();

  Matrix dh_next = Matrix::Zero(cell.hidden(), batch);
  Matrix dc_next = Matrix::Zero(cell.hidden(), batch);
  Matrix dx_carry = Matrix::Zero(feat, batch);
  for (Index k = t_pred - 1; k >= 0; --k) {
    Matrix d_out = d_outputs[std::size_t(k)];
    if (k + 1 < t_pred) d_out += dx_carry;  // output k fed step k+1

    Matrix dh = dh_next;
    head_backward(head, step_hidden(cache.steps[std::size_t(k)]), d_out, dh);

    dx_carry.setZero();
    Matrix dh_prev = Matrix::Zero(cell.hidden(), batch);
    Matrix dc_prev = Matrix::Zero(cell.hidden(), batch);
    lstm_cell_backward(cache.steps[std::size_t(k)], cell, dh, dc_next, dx_carry,
                       dh_prev, dc_prev);
    dh_next = std::move(dh_prev);
    dc_next = std::move(dc_prev);
  }
  return {std::move(dh_next), std::move(dc_next)};
}

std::vector<Matrix> decode_intention(const HiddenState& initial,
                                     const Matrix& last_box, Index t_pred,
                                     const LstmCellParams& cell,
                                     const LinearHead& head,
                                     const LinearHead& embedding,
                                     DecoderCache* cache) {
  if (t_pred < 1) throw ValidationError("decode_intention: t_pred must be >= 1");
  if (cache != nullptr) cache->steps.resize(std::size_t(t_pred));

  std::vector<Matrix> probs;
  probs.reserve(std::size_t(t_pred));
  HiddenState state = initial;
  Matrix x = last_box;
  for (Index k = 0; k < t_pred; ++k) {
    state = lstm_cell(x, state, cell,
                      cache != nullptr ? &cache->steps[std::size_t(k)] : nullptr);
    probs.push_back(softmax_cols(head.apply(state.h)));
    if (k + 1 < t_pred) x = embedding.apply(probs.back());
  }
  return probs;
}

HiddenState decode_intention_backward(const DecoderCache& cache,
                                      const std::vector<Matrix>& probs,
                                      const std::vector<Matrix>& d_probs,
                                      LstmCellParams& cell, LinearHead& head,
                                      LinearHead& embedding) {
  const Index t_pred = Index(cache.steps.size());
  const Index batch = cache.steps.front().x.cols();
  const Index feat = cell.input_dim();

  Matrix dh_next = Matrix::Zero(cell.hidden(), batch);
  Matrix dc_next = Matrix::Zero(cell.hidden(), batch);
  Matrix dp_carry = Matrix::Zero(2, batch);
  for (Index k = t_pred - 1; k >= 0; --k) {
    Matrix dp = d_probs[std::size_t(k)];
    if (k + 1 < t_pred) dp += dp_carry;  // distribution k was embedded into step k+1

    Matrix dz = softmax_cols_backward(probs[std::size_t(k)], dp);
    Matrix dh = dh_next;
    head_backward(head, step_hidden(cache.steps[std::size_t(k)]), dz, dh);

    Matrix dx = Matrix::Zero(feat, batch);
    Matrix dh_prev = Matrix::Zero(cell.hidden(), batch);
    Matrix dc_prev = Matrix::Zero(cell.hidden(), batch);
    lstm_cell_backward(cache.steps[std::size_t(k)], cell, dh, dc_next, dx,
                       dh_prev, dc_prev);
    if (k > 0) {
      embedding.weight.grad.noalias() += dx * probs[std::size_t(k) - 1].transpose();
      embedding.bias.grad.col(0) += dx.rowwise().sum();
      dp_carry.noalias() = embedding.weight.value.transpose() * dx;
    }
    dh_next = std::move(dh_prev);
    dc_next = std::move(dc_prev);
  }
  return {std::move(dh_next), std::move(dc_next)};
}

std::vector<BoundingBox> integrate_boxes(const BoundingBox& last_box,
                                         const std::vector<BoxVelocity>& velocities) {
  std::vector<BoundingBox> out;
  out.reserve(velocities.size());
  Eigen::Array4d acc(last_box.x_center, last_box.y_center, last_box.width,
                     last_box.height);
  for (const auto& v : velocities) {
    acc += Eigen::Array4d(v.dx, v.dy, v.dw, v.dh);
    out.push_back({Scalar(acc(0)), Scalar(acc(1)), Scalar(acc(2)), Scalar(acc(3))});
  }
  return out;
}

std::vector<Matrix> integrate_boxes(const Matrix& last_box,
                                    const std::vector<Matrix>& velocities) {
  std::vector<Matrix> out;
  out.reserve(velocities.size());
  MatrixD acc = last_box.cast<double>();
  for (const auto& v : velocities) {
    if (v.rows() != acc.rows() || v.cols() != acc.cols()) {
      throw DimensionError("integrate_boxes: velocity " + shape_string(v) +
                           " does not match box " + shape_string(last_box));
    }
    acc += v.cast<double>();
    out.push_back(acc.cast<Scalar>());
  }
  return out;
}

Batch assemble_batch(const std::vector<SequenceWindow>& windows,
                     std::span<const std::size_t> indices,
                     const ModelConfig& config, const NormalizationParams& norm) {
  if (indices.empty()) throw ValidationError("assemble_batch: empty batch");
  const Index feat = config.feature_dim();
  const Index batch = Index(indices.size());
  const Eigen::Array4f mean = feature_slice(norm, true, feat);
  const Eigen::Array4f stdev = feature_slice(norm, false, feat);

  auto box_feature = [&](const BoundingBox& b, Index component) {
    const float raw[4] = {b.x_center, b.y_center, b.width, b.height};
    return (raw[component] - mean(component)) / stdev(component);
  };
  auto vel_feature = [&](const BoxVelocity& v, Index component) {
    const float raw[4] = {v.dx, v.dy, v.dw, v.dh};
    return raw[component] / stdev(component);
  };

  Batch out;
  out.obs_boxes.assign(std::size_t(config.t_obs), Matrix(feat, batch));
  out.obs_velocities.assign(std::size_t(config.t_obs) - 1, Matrix(feat, batch));
  out.target_velocities.assign(std::size_t(config.t_pred), Matrix(feat, batch));
  out.target_boxes.assign(std::size_t(config.t_pred), Matrix(feat, batch));
  out.target_labels.assign(std::size_t(config.t_pred), Matrix(2, batch));
  out.last_box_raw.resize(4, batch);
  out.provenance.reserve(std::size_t(batch));

  for (Index col = 0; col < batch; ++col) {
    const SequenceWindow& w = windows[indices[std::size_t(col)]];
    if (Index(w.obs_boxes.size()) != config.t_obs ||
        Index(w.future_boxes.size()) != config.t_pred) {
      throw ValidationError("assemble_batch: window " + w.video_id + "/" +
                            w.ped_id + "@" + std::to_string(w.start_frame) +
                            " has geometry " +
                            std::to_string(w.obs_boxes.size()) + "+" +
                            std::to_string(w.future_boxes.size()) +
                            ", config wants " + std::to_string(config.t_obs) +
                            "+" + std::to_string(config.t_pred));
    }
    for (Index t = 0; t < config.t_obs; ++t) {
      for (Index c = 0; c < feat; ++c) {
        out.obs_boxes[std::size_t(t)](c, col) =
            box_feature(w.obs_boxes[std::size_t(t)], c);
      }
    }
    for (Index t = 0; t + 1 < config.t_obs; ++t) {
      for (Index c = 0; c < feat; ++c) {
        out.obs_velocities[std::size_t(t)](c, col) =
            vel_feature(w.obs_velocities[std::size_t(t)], c);
      }
    }
    for (Index t = 0; t < config.t_pred; ++t) {
      const BoundingBox& prev =
          t == 0 ? w.obs_boxes.back() : w.future_boxes[std::size_t(t) - 1];
      const BoxVelocity fut_vel = box_delta(prev, w.future_boxes[std::size_t(t)]);
      for (Index c = 0; c < feat; ++c) {
        out.target_velocities[std::size_t(t)](c, col) = vel_feature(fut_vel, c);
        out.target_boxes[std::size_t(t)](c, col) =
            box_feature(w.future_boxes[std::size_t(t)], c);
      }
      const IntentionLabel lab = w.future_labels[std::size_t(t)];
      out.target_labels[std::size_t(t)](0, col) = lab == 0 ? 1.0f : 0.0f;
      out.target_labels[std::size_t(t)](1, col) = lab == 1 ? 1.0f : 0.0f;
    }
    const BoundingBox& last = w.obs_boxes.back();
    out.last_box_raw.col(col) =
        Eigen::Vector4f(last.x_center, last.y_center, last.width, last.height);
    out.provenance.push_back(w.video_id + "/" + w.ped_id + "@" +
                             std::to_string(w.start_frame));
  }
  return out;
}

Batch assemble_batch(const std::vector<SequenceWindow>& windows,
                     const ModelConfig& config, const NormalizationParams& norm) {
  std::vector<std::size_t> all(windows.size());
  for (std::size_t k = 0; k < windows.size(); ++k) all[k] = k;
  return assemble_batch(windows, all, config, norm);
}

ForwardResult forward(const Batch& batch, const ModelParameters& params,
                      const ModelConfig& config, ForwardCache* cache) {
  const Index batch_size = batch.batch_size();
  HiddenState pos = HiddenState::zero(config.hidden_size, batch_size);
  HiddenState vel = HiddenState::zero(config.hidden_size, batch_size);
  if (config.encoders != EncoderSet::VelocityOnly) {
    pos = encode(batch.obs_boxes, params.enc_position,
                 cache != nullptr ? &cache->enc_position : nullptr);
  }
  if (config.encoders != EncoderSet::PositionOnly) {
    vel = encode(batch.obs_velocities, params.enc_velocity,
                 cache != nullptr ? &cache->enc_velocity : nullptr);
  }
  const HiddenState fused = fuse_hidden(pos, vel);

  ForwardResult result;
  if (config.wants_boxes()) {
    const Matrix& first = config.predicts_absolute_boxes()
                              ? batch.obs_boxes.back()
                              : batch.obs_velocities.back();
    result.outputs = decode_velocity(
        fused, first, config.t_pred, params.dec_velocity, params.out_velocity,
        cache != nullptr ? &cache->dec_velocity : nullptr);
  }
  if (config.wants_intention()) {
    result.intention_probs = decode_intention(
        fused, batch.obs_boxes.back(), config.t_pred, params.dec_intention,
        params.out_intention, params.intention_embedding,
        cache != nullptr ? &cache->dec_intention : nullptr);
  }
  return result;
}

void backward(const ForwardCache& cache, const ForwardResult& result,
              const std::vector<Matrix>& d_outputs,
              const std::vector<Matrix>& d_probs, ModelParameters& params,
              const ModelConfig& config) {
  const Index hidden = config.hidden_size;

  HiddenState d_fused;
  bool have_fused = false;
  if (!d_outputs.empty()) {
    d_fused = decode_velocity_backward(cache.dec_velocity, d_outputs,
                                       params.dec_velocity, params.out_velocity);
    have_fused = true;
  }
  if (!d_probs.empty()) {
    HiddenState d = decode_intention_backward(
        cache.dec_intention, result.intention_probs, d_probs,
        params.dec_intention, params.out_intention, params.intention_embedding);
    if (have_fused) {
      d_fused.h += d.h;
      d_fused.c += d.c;
    } else {
      d_fused = std::move(d);
      have_fused = true;
    }
  }
  if (!have_fused) return;

  if (config.encoders != EncoderSet::VelocityOnly) {
    encode_backward(cache.enc_position, params.enc_position,
                    d_fused.h.topRows(hidden), d_fused.c.topRows(hidden));
  }
  if (config.encoders != EncoderSet::PositionOnly) {
    encode_backward(cache.enc_velocity, params.enc_velocity,
                    d_fused.h.bottomRows(hidden), d_fused.c.bottomRows(hidden));
  }
}

std::vector<std::vector<BoundingBox>> predicted_boxes(
    const Batch& batch, const ForwardResult& result, const ModelConfig& config,
    const NormalizationParams& norm) {
  const Index feat = config.feature_dim();
  const Index batch_size = batch.batch_size();
  const Index t_pred = Index(result.outputs.size());
  if (t_pred == 0) {
    throw ValidationError("predicted_boxes: model produced no box outputs");
  }
  const Eigen::Array4f mean = feature_slice(norm, true, feat);
  const Eigen::Array4f stdev = feature_slice(norm, false, feat);

  std::vector<std::vector<BoundingBox>> boxes{
      std::size_t(batch_size),
      std::vector<BoundingBox>(std::size_t(t_pred))};
  if (config.predicts_absolute_boxes()) {
    for (Index k = 0; k < t_pred; ++k) {
      const Matrix& out = result.outputs[std::size_t(k)];
      for (Index col = 0; col < batch_size; ++col) {
        BoundingBox b{batch.last_box_raw(0, col), batch.last_box_raw(1, col),
                      batch.last_box_raw(2, col), batch.last_box_raw(3, col)};
        Scalar* comps[4] = {&b.x_center, &b.y_center, &b.width, &b.height};
        for (Index c = 0; c < feat; ++c) {
          *comps[c] = out(c, col) * stdev(c) + mean(c);
        }
        boxes[std::size_t(col)][std::size_t(k)] = b;
      }
    }
    return boxes;
  }

  // Velocity outputs: denormalize, widen to 4 components (zero size change in
  // center-only mode), integrate from the raw last box.
  std::vector<Matrix> raw_velocities;
  raw_velocities.reserve(std::size_t(t_pred));
  for (const Matrix& out : result.outputs) {
    Matrix v = Matrix::Zero(4, batch_size);
    for (Index c = 0; c < feat; ++c) v.row(c) = out.row(c) * stdev(c);
    raw_velocities.push_back(std::move(v));
  }
  const std::vector<Matrix> integrated =
      integrate_boxes(batch.last_box_raw, raw_velocities);
  for (Index k = 0; k < t_pred; ++k) {
    for (Index col = 0; col < batch_size; ++col) {
      boxes[std::size_t(col)][std::size_t(k)] = {
          integrated[std::size_t(k)](0, col), integrated[std::size_t(k)](1, col),
          integrated[std::size_t(k)](2, col), integrated[std::size_t(k)](3, col)};
    }
  }
  return boxes;
}

}  // namespace pvlstm

#include "pvlstm/trainer.hpp"

#include <cmath>

#include "pvlstm/text.hpp"

namespace pvlstm {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 over seed ^ salt; decorrelates per-epoch shuffles.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct BatchEval {
  StepLosses losses;
  std::vector<Matrix> d_outputs;  // weighted; empty when box head unsupervised
  std::vector<Matrix> d_probs;    // weighted; empty when intention unsupervised
};

/// Losses and (optionally) output gradients for one assembled batch.
BatchEval batch_losses(const Batch& batch, const ForwardResult& result,
                       const TrainConfig& config, bool want_grads) {
  const auto& model = config.model;
  BatchEval eval;

  if (model.wants_boxes()) {
    const double t_pred = double(config.model.t_pred);
    const bool box_space = model.predicts_absolute_boxes() ||
                           config.mse_target == MseTarget::Box;
    const std::vector<Matrix>* targets = nullptr;
    std::vector<Matrix> integrated;
    if (!box_space) {
      targets = &batch.target_velocities;
    } else {
      targets = &batch.target_boxes;
      if (!model.predicts_absolute_boxes()) {
        // Normalized coordinates integrate exactly like raw ones.
        integrated = integrate_boxes(batch.obs_boxes.back(), result.outputs);
      }
    }
    const std::vector<Matrix>& preds =
        integrated.empty() ? result.outputs : integrated;

    std::vector<Matrix> d_preds;
    for (std::size_t k = 0; k < preds.size(); ++k) {
      LossResult step = mse_loss(preds[k], (*targets)[k]);
      eval.losses.box += step.value / t_pred;
      if (want_grads && config.loss_weight_box > 0) {
        d_preds.push_back(step.grad *
                          Scalar(config.loss_weight_box / t_pred));
      }
    }
    if (!d_preds.empty()) {
      if (!integrated.empty()) {
        // Box k depends on every velocity up to k: reverse-accumulate.
        eval.d_outputs.assign(d_preds.size(), Matrix());
        Matrix acc = Matrix::Zero(d_preds[0].rows(), d_preds[0].cols());
        for (std::size_t k = d_preds.size(); k-- > 0;) {
          acc += d_preds[k];
          eval.d_outputs[k] = acc;
        }
      } else {
        eval.d_outputs = std::move(d_preds);
      }
    }
  }

  if (model.wants_intention()) {
    const double t_pred = double(config.model.t_pred);
    for (std::size_t k = 0; k < result.intention_probs.size(); ++k) {
      LossResult step =
          bce_loss(result.intention_probs[k], batch.target_labels[k]);
      eval.losses.intention += step.value / t_pred;
      if (want_grads && config.loss_weight_intention > 0) {
        eval.d_probs.push_back(step.grad *
                               Scalar(config.loss_weight_intention / t_pred));
      }
    }
  }
  return eval;
}

std::string provenance_digest(const Batch& batch) {
  std::string out;
  const std::size_t shown = std::min<std::size_t>(4, batch.provenance.size());
  for (std::size_t k = 0; k < shown; ++k) {
    if (k) out += ", ";
    out += batch.provenance[k];
  }
  if (batch.provenance.size() > shown) {
    out += ", ... (" + std::to_string(batch.provenance.size()) + " windows)";
  }
  return out;
}

}  // namespace

double weighted_total(const StepLosses& losses, const TrainConfig& config) {
  return config.loss_weight_box * losses.box +
         config.loss_weight_intention * losses.intention;
}

StepLosses compute_batch_losses(const ModelParameters& params,
                                const Batch& batch, const TrainConfig& config) {
  const ForwardResult result = forward(batch, params, config.model, nullptr);
  return batch_losses(batch, result, config, /*want_grads=*/false).losses;
}

StepLosses compute_batch_gradients(ModelParameters& params, const Batch& batch,
                                   const TrainConfig& config) {
  ForwardCache cache;
  const ForwardResult result = forward(batch, params, config.model, &cache);
  BatchEval eval = batch_losses(batch, result, config, /*want_grads=*/true);
  backward(cache, result, eval.d_outputs, eval.d_probs, params, config.model);
  return eval.losses;
}

StepLosses train_step(ModelParameters& params,
                      const std::vector<SequenceWindow>& windows,
                      std::span<const std::size_t> indices,
                      const TrainConfig& config, const NormalizationParams& norm,
                      Scalar learning_rate) {
  if (indices.empty()) throw ValidationError("train_step: empty batch");
  const Batch batch = assemble_batch(windows, indices, config.model, norm);

  ForwardCache cache;
  const ForwardResult result = forward(batch, params, config.model, &cache);
  BatchEval eval = batch_losses(batch, result, config, /*want_grads=*/true);

  if (!std::isfinite(eval.losses.box) || !std::isfinite(eval.losses.intention)) {
    throw NumericError("train_step: non-finite loss (box=" +
                       std::to_string(eval.losses.box) + ", intention=" +
                       std::to_string(eval.losses.intention) + ") on batch " +
                       provenance_digest(batch));
  }

  backward(cache, result, eval.d_outputs, eval.d_probs, params, config.model);
  for (ParamBlock* block : params.blocks()) {
    adam_step(*block, learning_rate);
  }
  return eval.losses;
}

StepLosses evaluate_losses(const ModelParameters& params,
                           const std::vector<SequenceWindow>& windows,
                           const TrainConfig& config,
                           const NormalizationParams& norm) {
  StepLosses total;
  std::size_t counted = 0;
  std::vector<std::size_t> indices;
  for (std::size_t start = 0; start < windows.size();
       start += std::size_t(config.batch_size)) {
    const std::size_t end =
        std::min(windows.size(), start + std::size_t(config.batch_size));
    indices.resize(end - start);
    for (std::size_t k = start; k < end; ++k) indices[k - start] = k;

    const Batch batch = assemble_batch(windows, indices, config.model, norm);
    const ForwardResult result = forward(batch, params, config.model, nullptr);
    const BatchEval eval = batch_losses(batch, result, config, false);
    const double w = double(end - start);
    total.box += eval.losses.box * w;
    total.intention += eval.losses.intention * w;
    counted += end - start;
  }
  if (counted > 0) {
    total.box /= double(counted);
    total.intention /= double(counted);
  }
  return total;
}

MetricsReport evaluate(const ModelParameters& params,
                       const std::vector<SequenceWindow>& windows,
                       const TrainConfig& config, const NormalizationParams& norm) {
  MetricsAccumulator acc;
  std::vector<std::size_t> indices;
  for (std::size_t start = 0; start < windows.size();
       start += std::size_t(config.batch_size)) {
    const std::size_t end =
        std::min(windows.size(), start + std::size_t(config.batch_size));
    indices.resize(end - start);
    for (std::size_t k = start; k < end; ++k) indices[k - start] = k;

    const Batch batch = assemble_batch(windows, indices, config.model, norm);
    const ForwardResult result = forward(batch, params, config.model, nullptr);

    std::vector<std::vector<BoundingBox>> boxes;
    if (config.model.wants_boxes()) {
      boxes = predicted_boxes(batch, result, config.model, norm);
    }
    for (std::size_t col = 0; col < end - start; ++col) {
      const SequenceWindow& w = windows[indices[col]];
      acc.count_sample();
      if (config.model.wants_boxes()) {
        acc.add_boxes(boxes[col], w.future_boxes);
      }
      if (config.model.wants_intention()) {
        std::vector<std::array<Scalar, 2>> probs(result.intention_probs.size());
        for (std::size_t k = 0; k < probs.size(); ++k) {
          probs[k] = {result.intention_probs[k](0, Index(col)),
                      result.intention_probs[k](1, Index(col))};
        }
        acc.add_intentions(probs, w.future_labels);
      }
    }
  }
  return acc.finalize();
}

std::string EpochLogRow::csv_header() {
  return "epoch,lr,loss_box,loss_int,val_ade,val_fde,val_aiou,val_fiou,val_acc";
}

std::string EpochLogRow::to_csv_row() const {
  std::string out = std::to_string(epoch);
  out += ',';
  out += format_float(lr);
  out += ',';
  out += format_double(loss_box);
  out += ',';
  out += format_double(loss_int);
  out += ',';
  out += format_double(val.ade);
  out += ',';
  out += format_double(val.fde);
  out += ',';
  out += format_double(val.aiou);
  out += ',';
  out += format_double(val.fiou);
  out += ',';
  out += format_double(val.intention_accuracy_all);
  return out;
}

FitResult fit(ModelParameters& params, const std::vector<SequenceWindow>& train,
              const std::vector<SequenceWindow>& validation,
              const TrainConfig& config, std::optional<TrainerState> resume,
              std::optional<NormalizationParams> resume_norm,
              const std::function<void(const EpochLogRow&)>& after_epoch) {
  config.validate();
  if (train.empty()) throw ValidationError("fit: empty training set");

  FitResult result;
  if (resume_norm.has_value()) {
    result.norm = *resume_norm;
  } else if (config.normalize == NormalizeMode::Affine) {
    result.norm = compute_normalization(train);
  }

  TrainerState state = resume.value_or(TrainerState{});
  if (!(state.lr > 0)) state.lr = float(config.learning_rate);

  const std::vector<SequenceWindow>& val_set =
      validation.empty() ? train : validation;

  for (int epoch = state.epoch; epoch < config.epochs; ++epoch) {
    const auto batches =
        make_batches(train.size(), std::size_t(config.batch_size),
                     mix_seed(config.seed, std::uint64_t(epoch)));
    StepLosses epoch_losses;
    for (const auto& batch_indices : batches) {
      const StepLosses losses = train_step(params, train, batch_indices, config,
                                           result.norm, state.lr);
      const double w = double(batch_indices.size()) / double(train.size());
      epoch_losses.box += losses.box * w;
      epoch_losses.intention += losses.intention * w;
    }

    const StepLosses val_losses =
        evaluate_losses(params, val_set, config, result.norm);
    EpochLogRow row;
    row.epoch = epoch + 1;
    row.lr = state.lr;
    row.loss_box = epoch_losses.box;
    row.loss_int = epoch_losses.intention;
    row.val = evaluate(params, val_set, config, result.norm);
    result.log.push_back(row);

    // Reduce-on-plateau, float on purpose (see TrainerState).
    const float val_total = float(weighted_total(val_losses, config));
    if (val_total < state.best_val) {
      state.best_val = val_total;
      state.plateau = 0;
    } else {
      state.plateau += 1;
      if (state.plateau > config.scheduler.patience) {
        const float reduced = std::max(state.lr * float(config.scheduler.factor),
                                       float(config.scheduler.min_lr));
        if (reduced < state.lr) state.lr = reduced;
        state.plateau = 0;
      }
    }
    state.epoch = epoch + 1;
    if (after_epoch) after_epoch(row);
  }
  result.state = state;
  return result;
}

}  // namespace pvlstm

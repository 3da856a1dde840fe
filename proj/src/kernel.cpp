#include "pvlstm/kernel.hpp"

#include <cmath>

namespace pvlstm {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a) +
                         " x " + shape_string(b));
  }
  return a * b;
}

Matrix softmax_rows(const Matrix& x) {
  // Scalar exp and an ordered sum; see the note on sigmoid/tanh.
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    Scalar total = 0;
    for (Index c = 0; c < x.cols(); ++c) {
      out(r, c) = std::exp(x(r, c) - m);
      total += out(r, c);
    }
    out.row(r) /= total;
  }
  return out;
}

Matrix softmax_cols(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    const Scalar m = x.col(c).maxCoeff();
    Scalar total = 0;
    for (Index r = 0; r < x.rows(); ++r) {
      out(r, c) = std::exp(x(r, c) - m);
      total += out(r, c);
    }
    out.col(c) /= total;
  }
  return out;
}

Matrix apply_activation(const Matrix& x, Activation kind) {
  switch (kind) {
    case Activation::Sigmoid:
      return sigmoid(x);
    case Activation::Tanh:
      return tanh(x);
    case Activation::SoftmaxRows:
      return softmax_rows(x);
  }
  throw ValidationError("apply_activation: unknown kind");
}

LossResult mse_loss(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DimensionError("mse_loss: shape mismatch " + shape_string(pred) +
                         " vs " + shape_string(target));
  }
  const double n = static_cast<double>(pred.size());
  Matrix diff = pred - target;
  LossResult res;
  res.value = diff.cast<double>().array().square().sum() / n;
  res.grad = (diff.array() * Scalar(2.0 / n)).matrix();
  return res;
}

LossResult bce_loss(const Matrix& probabilities, const Matrix& labels) {
  if (probabilities.rows() != labels.rows() ||
      probabilities.cols() != labels.cols()) {
    throw DimensionError("bce_loss: shape mismatch " +
                         shape_string(probabilities) + " vs " +
                         shape_string(labels));
  }
  if (((labels.array() != Scalar(0)) && (labels.array() != Scalar(1))).any()) {
    throw ValidationError("bce_loss: labels must be exactly 0 or 1");
  }
  const double n = static_cast<double>(probabilities.size());
  LossResult res;
  res.grad = Matrix::Zero(probabilities.rows(), probabilities.cols());
  double sum = 0.0;
  for (Index c = 0; c < probabilities.cols(); ++c) {
    for (Index r = 0; r < probabilities.rows(); ++r) {
      const Scalar y = labels(r, c);
      const Scalar p_raw = probabilities(r, c);
      const Scalar p = std::min(Scalar(1) - kBceEps, std::max(kBceEps, p_raw));
      sum -= static_cast<double>(y) * std::log(static_cast<double>(p)) +
             (1.0 - static_cast<double>(y)) *
                 std::log(1.0 - static_cast<double>(p));
      // Clamped entries sit on a flat piece of the loss.
      if (p_raw > kBceEps && p_raw < Scalar(1) - kBceEps) {
        res.grad(r, c) =
            Scalar((static_cast<double>(p) - static_cast<double>(y)) /
                   (static_cast<double>(p) * (1.0 - static_cast<double>(p)) * n));
      }
    }
  }
  res.value = sum / n;
  return res;
}

ParamBlock::ParamBlock(std::string name_, Index rows, Index cols)
    : name(std::move(name_)),
      value(Matrix::Zero(rows, cols)),
      grad(Matrix::Zero(rows, cols)),
      adam_m(Matrix::Zero(rows, cols)),
      adam_v(Matrix::Zero(rows, cols)) {}

void adam_step(ParamBlock& param, Scalar learning_rate, const AdamConfig& cfg) {
  if (!param.grad.allFinite()) {
    throw NumericError("adam_step: non-finite gradient in parameter '" +
                       param.name + "'");
  }
  param.step_count += 1;
  const double t = static_cast<double>(param.step_count);
  param.adam_m = cfg.beta1 * param.adam_m + (1 - cfg.beta1) * param.grad;
  param.adam_v =
      (cfg.beta2 * param.adam_v.array() +
       (1 - cfg.beta2) * param.grad.array().square())
          .matrix();
  const Scalar bias1 = Scalar(1.0 - std::pow(static_cast<double>(cfg.beta1), t));
  const Scalar bias2 = Scalar(1.0 - std::pow(static_cast<double>(cfg.beta2), t));
  param.value.array() -= learning_rate *
                         (param.adam_m.array() / bias1) /
                         ((param.adam_v.array() / bias2).sqrt() + cfg.epsilon);
  param.zero_grad();
}

}  // namespace pvlstm

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "pvlstm/types.hpp"

namespace pvlstm {

// ---------------------------------------------------------------------------
// Dense ops and activations.
//
// The expression-friendly forms accept any Eigen dense expression and return
// an evaluated Matrix; heavy lifting stays inside Eigen.
// ---------------------------------------------------------------------------

/// Checked matrix product. Throws DimensionError with both shapes on
/// mismatch instead of tripping an Eigen assert.
Matrix matmul(const Matrix& a, const Matrix& b);

// Scalar libm evaluation on purpose: Eigen's vectorized exp/tanh round
// differently in the SIMD body and the peeled edges, which would make a
// sample's activations depend on its position in the batch.
template <typename Derived>
Matrix sigmoid(const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr(
      [](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
}

template <typename Derived>
Matrix tanh(const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr([](Scalar v) { return std::tanh(v); });
}

/// Row-wise softmax, max-shifted for stability. Each output row sums to 1.
Matrix softmax_rows(const Matrix& x);

/// Column-wise softmax; the layout used for batched class scores
/// (classes x batch).
Matrix softmax_cols(const Matrix& x);

enum class Activation { Sigmoid, Tanh, SoftmaxRows };

Matrix apply_activation(const Matrix& x, Activation kind);

// ---------------------------------------------------------------------------
// Losses. Each returns the scalar loss and its gradient w.r.t. the first
// argument, averaged over all elements.
// ---------------------------------------------------------------------------

struct LossResult {
  double value = 0.0;
  Matrix grad;
};

/// Mean squared error: mean((pred - target)^2), grad = 2 (pred - target) / N.
LossResult mse_loss(const Matrix& pred, const Matrix& target);

/// Binary cross-entropy on probabilities. Inputs are clamped to
/// [kBceEps, 1 - kBceEps] before the logs; clamped entries get zero gradient.
/// Labels must be exactly 0 or 1.
LossResult bce_loss(const Matrix& probabilities, const Matrix& labels);

inline constexpr Scalar kBceEps = 1e-7f;

// ---------------------------------------------------------------------------
// Parameters and optimizer.
// ---------------------------------------------------------------------------

/// One learnable matrix together with its gradient and Adam state.
/// All four matrices share one shape; moments start at zero.
struct ParamBlock {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;
  std::int64_t step_count = 0;

  ParamBlock() = default;
  ParamBlock(std::string name_, Index rows, Index cols);

  void zero_grad() { grad.setZero(); }
};

struct AdamConfig {
  Scalar beta1 = 0.9f;
  Scalar beta2 = 0.999f;
  Scalar epsilon = 1e-8f;
};

/// Bias-corrected Adam update; zeroes the gradient afterwards.
/// Throws NumericError naming the block if the gradient is non-finite.
void adam_step(ParamBlock& param, Scalar learning_rate, const AdamConfig& cfg = {});

}  // namespace pvlstm

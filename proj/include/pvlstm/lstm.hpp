#pragma once

#include <array>
#include <vector>

#include "pvlstm/kernel.hpp"

namespace pvlstm {

/// Weights of one LSTM. Gate rows are stacked in the fixed order
/// (input i, forget f, cell g, output o), each block `hidden` rows tall:
///   input_weights     4*hidden x input_dim
///   recurrent_weights 4*hidden x hidden
///   bias              4*hidden x 1
struct LstmCellParams {
  ParamBlock input_weights;
  ParamBlock recurrent_weights;
  ParamBlock bias;

  Index hidden() const { return recurrent_weights.value.cols(); }
  Index input_dim() const { return input_weights.value.cols(); }
  std::array<ParamBlock*, 3> blocks() {
    return {&input_weights, &recurrent_weights, &bias};
  }
};

LstmCellParams make_lstm_params(const std::string& name, Index hidden,
                                Index input_dim);

/// Hidden and cell state, batch as columns (hidden x batch).
struct HiddenState {
  Matrix h;
  Matrix c;

  static HiddenState zero(Index hidden, Index batch) {
    return {Matrix::Zero(hidden, batch), Matrix::Zero(hidden, batch)};
  }
};

/// Everything the backward pass needs from one cell application.
struct LstmStepCache {
  Matrix x;
  Matrix h_prev, c_prev;
  Matrix i, f, g, o;
  Matrix c, tanh_c;
};

/// One cell step:
///   pre = Wx x + Wh h + b
///   i,f,o = sigmoid(pre), g = tanh(pre)
///   c' = f (.) c + i (.) g;  h' = o (.) tanh(c')
HiddenState lstm_cell(const Matrix& x, const HiddenState& state,
                      const LstmCellParams& params,
                      LstmStepCache* cache = nullptr);

/// Gradient of one cell step. Accumulates parameter gradients into `params`
/// and adds the input/previous-state gradients into dx/dh_prev/dc_prev
/// (which must be pre-sized and may carry earlier contributions).
void lstm_cell_backward(const LstmStepCache& cache, LstmCellParams& params,
                        const Matrix& dh, const Matrix& dc, Matrix& dx,
                        Matrix& dh_prev, Matrix& dc_prev);

/// Folds lstm_cell over the sequence from a zero state; returns the last
/// state. Throws ValidationError on an empty sequence.
HiddenState encode(const std::vector<Matrix>& inputs,
                   const LstmCellParams& params,
                   std::vector<LstmStepCache>* caches = nullptr);

/// BPTT through an encoded sequence given the gradient at its final state.
void encode_backward(const std::vector<LstmStepCache>& caches,
                     LstmCellParams& params, const Matrix& d_final_h,
                     const Matrix& d_final_c);

}  // namespace pvlstm

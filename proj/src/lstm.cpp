#include "pvlstm/lstm.hpp"

namespace pvlstm {

LstmCellParams make_lstm_params(const std::string& name, Index hidden,
                                Index input_dim) {
  LstmCellParams p;
  p.input_weights = ParamBlock(name + ".Wx", 4 * hidden, input_dim);
  p.recurrent_weights = ParamBlock(name + ".Wh", 4 * hidden, hidden);
  p.bias = ParamBlock(name + ".b", 4 * hidden, 1);
  return p;
}

HiddenState lstm_cell(const Matrix& x, const HiddenState& state,
                      const LstmCellParams& params, LstmStepCache* cache) {
  const Index hidden = params.hidden();
  if (x.rows() != params.input_dim()) {
    throw DimensionError("lstm_cell: input dim " + shape_string(x) +
                         " does not match weights " +
                         shape_string(params.input_weights.value));
  }
  if (state.h.rows() != hidden || state.c.rows() != hidden ||
      state.h.cols() != x.cols() || state.c.cols() != x.cols()) {
    throw DimensionError("lstm_cell: state shape " + shape_string(state.h) +
                         " inconsistent with hidden " + std::to_string(hidden) +
                         ", batch " + std::to_string(x.cols()));
  }

  // Per-column products keep every sample's arithmetic independent of its
  // batch, so batching and permutation are exact identities.
  Matrix pre(4 * hidden, x.cols());
  for (Index b = 0; b < x.cols(); ++b) {
    pre.col(b).noalias() = params.input_weights.value * x.col(b);
    pre.col(b).noalias() += params.recurrent_weights.value * state.h.col(b);
    pre.col(b) += params.bias.value.col(0);
  }

  Matrix i = sigmoid(pre.topRows(hidden));
  Matrix f = sigmoid(pre.middleRows(hidden, hidden));
  Matrix g = tanh(pre.middleRows(2 * hidden, hidden));
  Matrix o = sigmoid(pre.bottomRows(hidden));

  HiddenState next;
  next.c = (f.array() * state.c.array() + i.array() * g.array()).matrix();
  Matrix tanh_c = tanh(next.c);
  next.h = (o.array() * tanh_c.array()).matrix();

  if (cache != nullptr) {
    cache->x = x;
    cache->h_prev = state.h;
    cache->c_prev = state.c;
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->g = std::move(g);
    cache->o = std::move(o);
    cache->c = next.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

void lstm_cell_backward(const LstmStepCache& cache, LstmCellParams& params,
                        const Matrix& dh, const Matrix& dc, Matrix& dx,
                        Matrix& dh_prev, Matrix& dc_prev) {
  const Index hidden = params.hidden();
  const Index batch = cache.x.cols();

  // h' = o (.) tanh(c'); c' = f (.) c + i (.) g.
  Matrix d_o = (dh.array() * cache.tanh_c.array()).matrix();
  Matrix dc_total =
      (dc.array() +
       dh.array() * cache.o.array() * (1 - cache.tanh_c.array().square()))
          .matrix();
  Matrix d_f = (dc_total.array() * cache.c_prev.array()).matrix();
  Matrix d_i = (dc_total.array() * cache.g.array()).matrix();
  Matrix d_g = (dc_total.array() * cache.i.array()).matrix();

  // Through the gate nonlinearities to the pre-activations.
  Matrix d_pre(4 * hidden, batch);
  d_pre.topRows(hidden) =
      (d_i.array() * cache.i.array() * (1 - cache.i.array())).matrix();
  d_pre.middleRows(hidden, hidden) =
      (d_f.array() * cache.f.array() * (1 - cache.f.array())).matrix();
  d_pre.middleRows(2 * hidden, hidden) =
      (d_g.array() * (1 - cache.g.array().square())).matrix();
  d_pre.bottomRows(hidden) =
      (d_o.array() * cache.o.array() * (1 - cache.o.array())).matrix();

  params.input_weights.grad.noalias() += d_pre * cache.x.transpose();
  params.recurrent_weights.grad.noalias() += d_pre * cache.h_prev.transpose();
  params.bias.grad.col(0) += d_pre.rowwise().sum();

  dx.noalias() += params.input_weights.value.transpose() * d_pre;
  dh_prev.noalias() += params.recurrent_weights.value.transpose() * d_pre;
  dc_prev += (dc_total.array() * cache.f.array()).matrix();
}

HiddenState encode(const std::vector<Matrix>& inputs,
                   const LstmCellParams& params,
                   std::vector<LstmStepCache>* caches) {
  if (inputs.empty()) {
    throw ValidationError("encode: empty input sequence");
  }
  HiddenState state = HiddenState::zero(params.hidden(), inputs.front().cols());
  if (caches != nullptr) caches->resize(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    state = lstm_cell(inputs[t], state, params,
                      caches != nullptr ? &(*caches)[t] : nullptr);
  }
  return state;
}

void encode_backward(const std::vector<LstmStepCache>& caches,
                     LstmCellParams& params, const Matrix& d_final_h,
                     const Matrix& d_final_c) {
  const Index batch = d_final_h.cols();
  Matrix dh = d_final_h;
  Matrix dc = d_final_c;
  Matrix dx_unused(params.input_dim(), batch);
  for (auto it = caches.rbegin(); it != caches.rend(); ++it) {
    Matrix dh_prev = Matrix::Zero(params.hidden(), batch);
    Matrix dc_prev = Matrix::Zero(params.hidden(), batch);
    dx_unused.setZero();
    lstm_cell_backward(*it, params, dh, dc, dx_unused, dh_prev, dc_prev);
    dh = std::move(dh_prev);
    dc = std::move(dc_prev);
  }
}

}  // namespace pvlstm

#include <doctest.h>

#include <cmath>
#include <random>

#include "pvlstm/gradcheck.hpp"
#include "pvlstm/lstm.hpp"

using namespace pvlstm;

namespace {

void randomize(ParamBlock& block, std::uint64_t seed, Scalar scale = 0.5f) {
  std::mt19937_64 rng(seed);
  for (Index k = 0; k < block.value.size(); ++k) {
    block.value.data()[k] =
        scale * (2.0f * Scalar(rng() >> 40) / Scalar(1 << 24) - 1.0f);
  }
}

LstmCellParams random_cell(const std::string& name, Index hidden, Index input,
                           std::uint64_t seed) {
  LstmCellParams cell = make_lstm_params(name, hidden, input);
  randomize(cell.input_weights, seed);
  randomize(cell.recurrent_weights, seed + 1);
  randomize(cell.bias, seed + 2);
  return cell;
}

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) {
    m.data()[k] = 2.0f * Scalar(rng() >> 40) / Scalar(1 << 24) - 1.0f;
  }
  return m;
}

}  // namespace

TEST_CASE("zero cell with zero state stays zero") {
  const LstmCellParams cell = make_lstm_params("c", 4, 3);
  const HiddenState state = HiddenState::zero(4, 2);
  const HiddenState next = lstm_cell(random_matrix(3, 2, 7), state, cell);
  CHECK(next.h == Matrix::Zero(4, 2));
  CHECK(next.c == Matrix::Zero(4, 2));
}

TEST_CASE("zero cell halves a unit cell state") {
  // All-zero weights: i=f=o=0.5, g=0, so c' = 0.5 and h' = 0.5*tanh(0.5).
  const LstmCellParams cell = make_lstm_params("c", 2, 2);
  HiddenState state = HiddenState::zero(2, 1);
  state.c.setOnes();
  const HiddenState next = lstm_cell(Matrix::Zero(2, 1), state, cell);
  CHECK(next.c(0, 0) == doctest::Approx(0.5));
  CHECK(next.h(0, 0) == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-6));
}

TEST_CASE("cell rejects mismatched input") {
  const LstmCellParams cell = make_lstm_params("c", 4, 3);
  CHECK_THROWS_AS(
      lstm_cell(Matrix::Zero(5, 2), HiddenState::zero(4, 2), cell),
      DimensionError);
}

TEST_CASE("encode of a length-1 sequence equals one cell application") {
  const LstmCellParams cell = random_cell("c", 5, 3, 1001);
  const Matrix x = random_matrix(3, 2, 1002);
  const HiddenState direct = lstm_cell(x, HiddenState::zero(5, 2), cell);
  const HiddenState folded = encode({x}, cell);
  CHECK(folded.h == direct.h);
  CHECK(folded.c == direct.c);
}

TEST_CASE("encode matches a manual unroll") {
  const LstmCellParams cell = random_cell("c", 6, 4, 1011);
  std::vector<Matrix> seq;
  for (int k = 0; k < 3; ++k) seq.push_back(random_matrix(4, 3, 1020 + k));

  HiddenState manual = HiddenState::zero(6, 3);
  for (const auto& x : seq) manual = lstm_cell(x, manual, cell);

  const HiddenState folded = encode(seq, cell);
  CHECK(folded.h == manual.h);
  CHECK(folded.c == manual.c);
}

TEST_CASE("encode with zero params gives a zero state") {
  const LstmCellParams cell = make_lstm_params("c", 4, 2);
  std::vector<Matrix> seq;
  for (int k = 0; k < 5; ++k) seq.push_back(random_matrix(2, 2, 1030 + k));
  const HiddenState state = encode(seq, cell);
  CHECK(state.h == Matrix::Zero(4, 2));
  CHECK(state.c == Matrix::Zero(4, 2));
}

TEST_CASE("encode rejects an empty sequence") {
  const LstmCellParams cell = make_lstm_params("c", 4, 2);
  CHECK_THROWS_AS(encode({}, cell), ValidationError);
}

TEST_CASE("one-cell gradient matches finite differences") {
  // Scalar loss: sum of h' after one cell step over a random batch.
  LstmCellParams cell = random_cell("cell", 4, 3, 1041);
  const Matrix x = random_matrix(3, 2, 1042);
  HiddenState init;
  init.h = random_matrix(4, 2, 1043);
  init.c = random_matrix(4, 2, 1044);

  const auto loss = [&]() {
    const HiddenState out = lstm_cell(x, init, cell);
    return double(out.h.sum()) + 0.5 * double(out.c.sum());
  };

  LstmStepCache cache;
  lstm_cell(x, init, cell, &cache);
  Matrix dx = Matrix::Zero(3, 2);
  Matrix dh_prev = Matrix::Zero(4, 2);
  Matrix dc_prev = Matrix::Zero(4, 2);
  lstm_cell_backward(cache, cell, Matrix::Ones(4, 2),
                     Matrix::Constant(4, 2, 0.5f), dx, dh_prev, dc_prev);

  const auto report =
      grad_check(loss, {&cell.input_weights, &cell.recurrent_weights, &cell.bias});
  CHECK(report.max_error() < 1e-3);
}

TEST_CASE("bptt through an encoded sequence matches finite differences") {
  LstmCellParams cell = random_cell("cell", 4, 3, 1051);
  std::vector<Matrix> seq;
  for (int k = 0; k < 4; ++k) seq.push_back(random_matrix(3, 2, 1060 + k));

  const auto loss = [&]() {
    const HiddenState out = encode(seq, cell);
    return double(out.h.squaredNorm()) + double(out.c.sum());
  };

  std::vector<LstmStepCache> caches;
  const HiddenState out = encode(seq, cell, &caches);
  encode_backward(caches, cell, 2.0f * out.h, Matrix::Ones(4, 2));

  const auto report =
      grad_check(loss, {&cell.input_weights, &cell.recurrent_weights, &cell.bias});
  CHECK(report.max_error() < 5e-3);
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "pvlstm/gradcheck.hpp"
#include "pvlstm/kernel.hpp"

using namespace pvlstm;

namespace {

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed,
                     Scalar lo = -1.0f, Scalar hi = 1.0f) {
  std::mt19937_64 rng(seed);
  Matrix m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) {
    const Scalar u = Scalar(rng() >> 40) / Scalar(1 << 24);
    m.data()[k] = lo + (hi - lo) * u;
  }
  return m;
}

// Independent oracle: naive triple loop, the reference accumulation order.
Matrix matmul_naive(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      Scalar acc = 0;
      for (Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("matmul identity and zero") {
  const Matrix a = random_matrix(2, 2, 11);
  const Matrix id = Matrix::Identity(2, 2);
  CHECK(matmul(id, a) == a);

  Matrix b(2, 2);
  b << 1, 2, 3, 4;
  const Matrix z = Matrix::Zero(2, 1);
  CHECK(matmul(b, z) == Matrix::Zero(2, 1));
}

TEST_CASE("matmul matches the triple-loop oracle") {
  const Matrix a = random_matrix(3, 4, 21);
  const Matrix b = random_matrix(4, 5, 22);
  const Matrix got = matmul(a, b);
  const Matrix want = matmul_naive(a, b);
  for (Index k = 0; k < got.size(); ++k) {
    const double g = got.data()[k], w = want.data()[k];
    CHECK(std::abs(g - w) <= 1e-5 * std::max(1.0, std::abs(w)));
  }
}

TEST_CASE("matmul rejects mismatched shapes") {
  const Matrix a = Matrix::Zero(2, 3);
  const Matrix b = Matrix::Zero(4, 2);
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x3"), DimensionError);
}

TEST_CASE("activation values") {
  Matrix zero = Matrix::Zero(1, 1);
  CHECK(sigmoid(zero)(0, 0) == doctest::Approx(0.5));

  Matrix two = Matrix::Zero(1, 2);
  const Matrix sm = softmax_rows(two);
  CHECK(sm(0, 0) == doctest::Approx(0.5));
  CHECK(sm(0, 1) == doctest::Approx(0.5));

  Matrix half = Matrix::Constant(1, 1, 0.5f);
  CHECK(std::abs(double(tanh(half)(0, 0)) - std::tanh(0.5)) < 1e-6);

  CHECK(apply_activation(half, Activation::Tanh) == tanh(half));
  CHECK(apply_activation(half, Activation::Sigmoid) == sigmoid(half));
}

TEST_CASE("activation ranges and softmax normalization") {
  // +-8 is the regime where float32 sigmoid/tanh stay strictly inside their
  // open intervals; beyond that they saturate to the representable bound.
  const Matrix x = random_matrix(7, 9, 33, -8.0f, 8.0f);
  const Matrix s = sigmoid(x);
  const Matrix t = tanh(x);
  CHECK((s.array() > 0).all());
  CHECK((s.array() < 1).all());
  CHECK((t.array() > -1).all());
  CHECK((t.array() < 1).all());

  const Matrix sm = apply_activation(x, Activation::SoftmaxRows);
  for (Index r = 0; r < sm.rows(); ++r) {
    CHECK(std::abs(sm.row(r).sum() - 1.0f) < 1e-6f);
    CHECK((sm.row(r).array() >= 0).all());
  }
  CHECK(sm.allFinite());
}

TEST_CASE("mse loss values") {
  const Matrix a = random_matrix(3, 3, 41);
  CHECK(mse_loss(a, a).value == 0.0);

  Matrix pred(1, 2), target(1, 2);
  pred << 1, 1;
  target << 0, 0;
  CHECK(mse_loss(pred, target).value == doctest::Approx(1.0));

  CHECK_THROWS_AS(mse_loss(Matrix::Zero(2, 2), Matrix::Zero(2, 3)),
                  DimensionError);
}

TEST_CASE("mse gradient matches central differences") {
  Matrix pred = random_matrix(2, 4, 51);
  const Matrix target = random_matrix(2, 4, 52);
  const Matrix analytic = mse_loss(pred, target).grad;
  const Scalar h = 1e-3f;
  for (Index k = 0; k < pred.size(); ++k) {
    const Scalar saved = pred.data()[k];
    pred.data()[k] = saved + h;
    const double up = mse_loss(pred, target).value;
    pred.data()[k] = saved - h;
    const double down = mse_loss(pred, target).value;
    pred.data()[k] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.data()[k];
    CHECK(std::abs(a - numeric) <=
          1e-3 * std::max({1.0, std::abs(a), std::abs(numeric)}));
  }
}

TEST_CASE("bce loss values") {
  Matrix p(1, 1), y(1, 1);
  p << 0.5f;
  y << 1.0f;
  CHECK(bce_loss(p, y).value == doctest::Approx(std::log(2.0)).epsilon(1e-6));

  p << 1.0f;  // clamped to 1 - eps
  CHECK(bce_loss(p, y).value < 1e-6);

  p << 0.9f;
  y << 0.0f;
  CHECK(bce_loss(p, y).value == doctest::Approx(2.302585).epsilon(1e-5));

  y << 0.5f;
  CHECK_THROWS_AS(bce_loss(p, y), ValidationError);
}

TEST_CASE("bce gradient matches central differences") {
  Matrix p = random_matrix(2, 3, 61, 0.1f, 0.9f);
  Matrix y(2, 3);
  y << 1, 0, 1, 0, 0, 1;
  const Matrix analytic = bce_loss(p, y).grad;
  const Scalar h = 1e-4f;
  for (Index k = 0; k < p.size(); ++k) {
    const Scalar saved = p.data()[k];
    p.data()[k] = saved + h;
    const double up = bce_loss(p, y).value;
    p.data()[k] = saved - h;
    const double down = bce_loss(p, y).value;
    p.data()[k] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.data()[k];
    CHECK(std::abs(a - numeric) <=
          2e-3 * std::max({1.0, std::abs(a), std::abs(numeric)}));
  }
}

TEST_CASE("bce is non-negative and mse zero only at equality") {
  const Matrix p = random_matrix(4, 4, 71, 0.05f, 0.95f);
  Matrix y = Matrix::Zero(4, 4);
  y(0, 0) = 1;
  CHECK(bce_loss(p, y).value >= 0.0);

  Matrix a = random_matrix(4, 4, 72);
  Matrix b = a;
  b(1, 2) += 0.25f;
  CHECK(mse_loss(a, b).value > 0.0);
}

TEST_CASE("adam with zero gradient leaves values untouched") {
  ParamBlock block("w", 3, 3);
  block.value = random_matrix(3, 3, 81);
  const Matrix before = block.value;
  adam_step(block, 0.1f);
  CHECK(block.value == before);
  CHECK(block.step_count == 1);
}

TEST_CASE("adam first step is approximately -lr * sign(grad)") {
  ParamBlock block("w", 1, 1);
  block.value(0, 0) = 0.0f;
  block.grad(0, 0) = 2.0f;
  adam_step(block, 0.1f);
  CHECK(block.value(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(block.grad(0, 0) == 0.0f);  // zeroed after the step
}

TEST_CASE("adam drives a quadratic toward zero") {
  ParamBlock block("w", 1, 1);
  block.value(0, 0) = 1.0f;
  Scalar prev = 1.0f;
  for (int step = 0; step < 100; ++step) {
    block.grad(0, 0) = 2.0f * block.value(0, 0);
    adam_step(block, 0.01f);
    const Scalar mag = std::abs(block.value(0, 0));
    CHECK(mag < prev);
    prev = mag;
  }
  CHECK(prev < 0.5f);
}

TEST_CASE("adam is deterministic") {
  auto run = [] {
    ParamBlock block("w", 2, 2);
    block.value = random_matrix(2, 2, 91);
    for (int k = 0; k < 5; ++k) {
      block.grad = random_matrix(2, 2, 92 + std::uint64_t(k));
      adam_step(block, 0.05f);
    }
    return block.value;
  };
  CHECK(run() == run());
}

TEST_CASE("adam rejects non-finite gradients by name") {
  ParamBlock block("enc.Wx", 1, 1);
  block.grad(0, 0) = std::numeric_limits<Scalar>::quiet_NaN();
  CHECK_THROWS_WITH_AS(adam_step(block, 0.1f), doctest::Contains("enc.Wx"),
                       NumericError);
}

TEST_CASE("grad_check validates a linear model with mse") {
  // loss = mse(W x, target) over a fixed batch; analytic grad by hand.
  const Matrix x = random_matrix(3, 5, 101);
  const Matrix target = random_matrix(2, 5, 102);
  ParamBlock w("w", 2, 3);
  w.value = random_matrix(2, 3, 103);

  const auto loss = [&]() { return mse_loss(w.value * x, target).value; };
  w.grad = mse_loss(w.value * x, target).grad * x.transpose();

  const auto report = grad_check(loss, {&w});
  CHECK(report.worst_by_block.size() == 1);
  CHECK(report.max_error() < 1e-3);
}

TEST_CASE("grad_check on a constant loss reports zero error") {
  ParamBlock w("w", 2, 2);
  w.value = random_matrix(2, 2, 111);
  const auto report = grad_check([]() { return 4.2; }, {&w});
  CHECK(report.max_error() < 1e-6);
}

TEST_CASE("grad_check flags a corrupted gradient") {
  const Matrix x = random_matrix(3, 4, 121);
  const Matrix target = random_matrix(1, 4, 122);
  ParamBlock w("w", 1, 3);
  w.value = random_matrix(1, 3, 123);
  w.grad = mse_loss(w.value * x, target).grad * x.transpose();
  w.grad(0, 0) += 1.0f;
  const auto loss = [&]() { return mse_loss(w.value * x, target).value; };
  CHECK(grad_check(loss, {&w}).max_error() > 0.1);
}

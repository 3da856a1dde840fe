#include "pvlstm/baselines.hpp"

#include <Eigen/Cholesky>

namespace pvlstm {

namespace {

using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat8 = Eigen::Matrix<double, 8, 8>;
using Vec4 = Eigen::Matrix<double, 4, 1>;
using Mat4 = Eigen::Matrix<double, 4, 4>;
using Mat48 = Eigen::Matrix<double, 4, 8>;

Mat8 transition() {
  Mat8 f = Mat8::Identity();
  f.topRightCorner<4, 4>() = Mat4::Identity();
  return f;
}

Vec4 observe(const BoundingBox& b) {
  return Vec4(b.x_center, b.y_center, b.width, b.height);
}

}  // namespace

std::vector<BoundingBox> cvcs_predict(const SequenceWindow& window, Index t_pred,
                                      CvcsVelocityMode mode) {
  if (window.obs_boxes.size() < 2) {
    throw ValidationError("cvcs_predict: need at least 2 observed boxes");
  }
  double vx = 0, vy = 0;
  if (mode == CvcsVelocityMode::Last) {
    const auto& last = window.obs_velocities.back();
    vx = last.dx;
    vy = last.dy;
  } else {
    for (const auto& v : window.obs_velocities) {
      vx += v.dx;
      vy += v.dy;
    }
    vx /= double(window.obs_velocities.size());
    vy /= double(window.obs_velocities.size());
  }

  const BoundingBox& last = window.obs_boxes.back();
  std::vector<BoundingBox> out;
  out.reserve(std::size_t(t_pred));
  double x = last.x_center, y = last.y_center;
  for (Index k = 0; k < t_pred; ++k) {
    x += vx;
    y += vy;
    out.push_back({Scalar(x), Scalar(y), last.width, last.height});
  }
  return out;
}

KalmanState lkf_fit(const SequenceWindow& window, const LkfConfig& config) {
  if (window.obs_boxes.size() < 2) {
    throw ValidationError("lkf_fit: need at least 2 observed boxes");
  }
  const Mat8 f = transition();
  Mat8 q = Mat8::Zero();
  q.diagonal().head<4>().setConstant(config.process_noise_pos);
  q.diagonal().tail<4>().setConstant(config.process_noise_vel);
  Mat48 h = Mat48::Zero();
  h.leftCols<4>() = Mat4::Identity();
  const Mat4 r = Mat4::Identity() * config.observation_noise;

  KalmanState state;
  state.mean.head<4>() = observe(window.obs_boxes.front());
  state.covariance = Mat8::Identity() * config.initial_covariance;

  for (std::size_t k = 1; k < window.obs_boxes.size(); ++k) {
    // predict
    state.mean = f * state.mean;
    state.covariance = f * state.covariance * f.transpose() + q;
    // update
    const Mat4 innovation_cov = h * state.covariance * h.transpose() + r;
    Eigen::LLT<Mat4> llt(innovation_cov);
    if (llt.info() != Eigen::Success) {
      throw NumericError(
          "lkf_fit: innovation covariance not positive definite at step " +
          std::to_string(k) + " (diagonal " +
          std::to_string(innovation_cov.diagonal().minCoeff()) + ")");
    }
    const Vec4 innovation = observe(window.obs_boxes[k]) - h * state.mean;
    const Eigen::Matrix<double, 8, 4> gain =
        state.covariance * h.transpose() * llt.solve(Mat4::Identity());
    state.mean += gain * innovation;
    state.covariance = (Mat8::Identity() - gain * h) * state.covariance;
    state.covariance =
        ((state.covariance + state.covariance.transpose()) / 2).eval();
  }
  return state;
}

std::vector<BoundingBox> lkf_fit_predict(const SequenceWindow& window,
                                         Index t_pred, const LkfConfig& config) {
  KalmanState state = lkf_fit(window, config);
  const Mat8 f = transition();

  std::vector<BoundingBox> out;
  out.reserve(std::size_t(t_pred));
  for (Index k = 0; k < t_pred; ++k) {
    state.mean = f * state.mean;
    out.push_back({Scalar(state.mean(0)), Scalar(state.mean(1)),
                   Scalar(state.mean(2)), Scalar(state.mean(3))});
  }
  return out;
}

}  // namespace pvlstm

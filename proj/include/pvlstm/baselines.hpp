#pragma once

#include <vector>

#include "pvlstm/dataio.hpp"

namespace pvlstm {

enum class CvcsVelocityMode { Mean, Last };

/// Constant-velocity, constant-scale extrapolation: the center advances by
/// the mean (or last) observed center velocity, width/height stay at the
/// last observed values.
std::vector<BoundingBox> cvcs_predict(const SequenceWindow& window, Index t_pred,
                                      CvcsVelocityMode mode = CvcsVelocityMode::Mean);

struct LkfConfig {
  double process_noise_pos = 0.01;  // position/size components
  double process_noise_vel = 1.0;   // velocity components
  double observation_noise = 1.0;
  double initial_covariance = 10.0;
};

/// Filter state over (x, y, w, h, dx, dy, dw, dh). The covariance is
/// re-symmetrized after every update and must stay PSD.
struct KalmanState {
  Eigen::Matrix<double, 8, 1> mean = Eigen::Matrix<double, 8, 1>::Zero();
  Eigen::Matrix<double, 8, 8> covariance = Eigen::Matrix<double, 8, 8>::Zero();
};

/// Linear Kalman filter with constant-velocity dynamics at unit timestep:
/// runs predict/update over the observed boxes, then rolls the dynamics
/// forward t_pred steps without updates.
std::vector<BoundingBox> lkf_fit_predict(const SequenceWindow& window,
                                         Index t_pred, const LkfConfig& config = {});

/// The filter state after consuming the observations (exposed for
/// diagnostics and invariant tests).
KalmanState lkf_fit(const SequenceWindow& window, const LkfConfig& config = {});

}  // namespace pvlstm

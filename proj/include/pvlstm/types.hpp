#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pvlstm {

/// Working precision of the learnable path. Pixel bookkeeping that must be
/// exact (velocity derivation, box integration, metric accumulation) runs in
/// double internally and converts at the boundary.
using Scalar = float;

using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

using MatrixD = Eigen::MatrixXd;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Incompatible matrix/sequence shapes.
struct DimensionError : Error {
  using Error::Error;
};

/// Bad input data (labels outside {0,1}, empty sequences, ...).
struct ValidationError : Error {
  using Error::Error;
};

/// Malformed text input; message carries the line number.
struct ParseError : Error {
  using Error::Error;
};

/// Configuration inconsistent with itself or with stored parameters.
struct ConfigError : Error {
  using Error::Error;
};

/// Non-finite gradients or failed numeric preconditions at run time.
struct NumericError : Error {
  using Error::Error;
};

inline std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace pvlstm

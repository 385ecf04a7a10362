#pragma once

#include <complex>
#include <stdexcept>

#include <Eigen/Dense>

namespace sphere4 {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

/// Raised when an iterative numerical stage cannot reach its tolerance and the
/// caller asked for a hard failure rather than a flagged result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sphere4

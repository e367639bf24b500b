#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace magnav {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline constexpr int kNumJoints = 7;
inline constexpr int kStateDim = 13;
inline constexpr int kControlDim = 7;

using JointVec = Eigen::Matrix<double, kNumJoints, 1>;
using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using ControlVec = Eigen::Matrix<double, kControlDim, 1>;

inline constexpr double kPi = 3.14159265358979323846;
// Vacuum permeability, T·m/A.
inline constexpr double kMu0 = 4.0e-7 * kPi;

/// Raised when a physical model is evaluated outside its domain of validity
/// (e.g. the dipole model below the minimum separation).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised on mismatched dimensions or violated preconditions of an API call.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline bool all_finite(const Eigen::Ref<const MatX>& m) {
  return m.allFinite();
}

}  // namespace magnav

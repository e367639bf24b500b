#pragma once

// Denavit-Hartenberg forward kinematics and manipulability metrics for the
// serial arm that carries the EPM.

#include <vector>

#include <Eigen/SVD>

#include "magnav/common.hpp"

namespace magnav::kinematics {

enum class DhConvention { kClassic, kModified };

struct DhRow {
  double a = 0.0;
  double d = 0.0;
  double alpha = 0.0;
  double theta_offset = 0.0;
};

struct DhTable {
  std::vector<DhRow> rows;
  DhConvention convention = DhConvention::kClassic;
  // Last joint frame -> EPM center; its z column is what the magnet axis is
  // expressed against via MagnetSpec::axis_in_mount_frame.
  Mat4 tool_transform = Mat4::Identity();

  int num_joints() const { return static_cast<int>(rows.size()); }

  void validate() const {
    const Mat3 r = tool_transform.topLeftCorner<3, 3>();
    if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        std::abs(r.determinant() - 1.0) > 1e-9) {
      throw ContractError("tool_transform rotation block is not orthonormal");
    }
    if (tool_transform.row(3) != Eigen::RowVector4d(0, 0, 0, 1)) {
      throw ContractError("tool_transform last row must be [0 0 0 1]");
    }
  }
};

struct EpmPose {
  Vec3 position = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
};

inline Mat4 dh_transform(const DhRow& row, double q, DhConvention convention) {
  const double th = q + row.theta_offset;
  const double ct = std::cos(th), st = std::sin(th);
  const double ca = std::cos(row.alpha), sa = std::sin(row.alpha);
  Mat4 t;
  if (convention == DhConvention::kClassic) {
    // Rz(θ) Tz(d) Tx(a) Rx(α)
    t << ct, -st * ca, st * sa, row.a * ct,
         st, ct * ca, -ct * sa, row.a * st,
         0.0, sa, ca, row.d,
         0.0, 0.0, 0.0, 1.0;
  } else {
    // Rx(α) Tx(a) Rz(θ) Tz(d)
    t << ct, -st, 0.0, row.a,
         st * ca, ct * ca, -sa, -sa * row.d,
         st * sa, ct * sa, ca, ca * row.d,
         0.0, 0.0, 0.0, 1.0;
  }
  return t;
}

inline void check_joint_count(const DhTable& dh, Eigen::Index n) {
  if (n != dh.num_joints()) {
    throw ContractError("joint vector has " + std::to_string(n) +
                        " entries, DH table has " +
                        std::to_string(dh.num_joints()));
  }
}

/// Homogeneous transform of the EPM frame in the base frame.
inline Mat4 forward_transform(const DhTable& dh,
                              const Eigen::Ref<const VecX>& q) {
  check_joint_count(dh, q.size());
  Mat4 t = Mat4::Identity();
  for (int i = 0; i < dh.num_joints(); ++i) {
    t = t * dh_transform(dh.rows[i], q[i], dh.convention);
  }
  return t * dh.tool_transform;
}

inline EpmPose forward_kinematics(const DhTable& dh,
                                  const Eigen::Ref<const VecX>& q) {
  const Mat4 t = forward_transform(dh, q);
  return {t.topRightCorner<3, 1>(), t.topLeftCorner<3, 3>()};
}

/// 6×n geometric Jacobian of the EPM center: rows 0-2 linear velocity,
/// rows 3-5 angular velocity.
inline MatX geometric_jacobian(const DhTable& dh,
                               const Eigen::Ref<const VecX>& q) {
  check_joint_count(dh, q.size());
  const int n = dh.num_joints();
  std::vector<Vec3> axes(n), origins(n);
  Mat4 t = Mat4::Identity();
  for (int i = 0; i < n; ++i) {
    if (dh.convention == DhConvention::kClassic) {
      // Joint i turns about z of the preceding frame.
      axes[i] = t.block<3, 1>(0, 2);
      origins[i] = t.block<3, 1>(0, 3);
      t = t * dh_transform(dh.rows[i], q[i], dh.convention);
    } else {
      t = t * dh_transform(dh.rows[i], q[i], dh.convention);
      axes[i] = t.block<3, 1>(0, 2);
      origins[i] = t.block<3, 1>(0, 3);
    }
  }
  const Vec3 p = (t * dh.tool_transform).block<3, 1>(0, 3);
  MatX jac(6, n);
  for (int i = 0; i < n; ++i) {
    jac.block<3, 1>(0, i) = axes[i].cross(p - origins[i]);
    jac.block<3, 1>(3, i) = axes[i];
  }
  return jac;
}

inline constexpr double kConditionSentinel = 1e12;

/// σ_max/σ_min of J; returns `sentinel` for (numerically) rank-deficient J.
inline double condition_number(const Eigen::Ref<const MatX>& jac,
                               double sentinel = kConditionSentinel) {
  if (!jac.allFinite()) {
    throw ContractError("condition_number: non-finite Jacobian");
  }
  Eigen::JacobiSVD<MatX> svd(jac);
  const VecX& s = svd.singularValues();
  if (s.size() == 0) return sentinel;
  const double smax = s.maxCoeff();
  const double smin = s.minCoeff();
  if (!(smax > 0.0) || smin < 1e-12 * smax) return sentinel;
  return smax / smin;
}

/// Upper bound on |∂p_E/∂q_i| for any joint, from summed link offsets.
inline double reach_bound(const DhTable& dh) {
  double r = dh.tool_transform.topRightCorner<3, 1>().norm();
  for (const auto& row : dh.rows) r += std::abs(row.a) + std::abs(row.d);
  return r;
}

/// Franka-Panda-like 7-joint table (modified DH) with the EPM mounted
/// coaxially with the flange, dipole along tool z. Representative geometry,
/// not a calibrated hardware model.
inline DhTable panda_like_table(double epm_offset = 0.142) {
  DhTable dh;
  dh.convention = DhConvention::kModified;
  const double h = kPi / 2.0;
  dh.rows = {{0.0, 0.333, 0.0, 0.0},      {0.0, 0.0, -h, 0.0},
             {0.0, 0.316, h, 0.0},        {0.0825, 0.0, h, 0.0},
             {-0.0825, 0.384, -h, 0.0},   {0.0, 0.0, h, 0.0},
             {0.088, 0.0, h, 0.0}};
  dh.tool_transform = Mat4::Identity();
  dh.tool_transform(2, 3) = epm_offset;
  return dh;
}

}  // namespace magnav::kinematics

#pragma once

// Combined EPM+IPM discrete-time transition. State layout:
//   x = [p_I (0..2), v_I (3..5), q (6..12)],  u = joint velocities (7).

#include <string>

#include "magnav/kinematics.hpp"
#include "magnav/magnetics.hpp"

namespace magnav::plant {

struct FluidParams {
  double drag_coefficient = 0.77;               // N·s²/m²
  Vec3 effective_weight{0.0, 0.0, -0.69e-3};    // N, gravity + buoyancy
  double ipm_mass = 8.1e-3;                     // kg

  void validate() const {
    if (!(drag_coefficient >= 0.0)) {
      throw ContractError("fluid.drag_coefficient must be >= 0");
    }
    if (!(ipm_mass > 0.0)) throw ContractError("fluid.ipm_mass must be > 0");
    if (!effective_weight.allFinite()) {
      throw ContractError("fluid.effective_weight must be finite");
    }
  }
};

struct PlantModel {
  kinematics::DhTable dh = kinematics::panda_like_table();
  magnetics::MagnetSpec epm{51.25, Vec3::UnitZ()};
  magnetics::MagnetSpec ipm{0.142, Vec3::UnitX()};
  FluidParams fluid;
  double min_separation = magnetics::kDefaultMinSeparation;
  // Off switches the magnetic force out of the IPM dynamics entirely.
  bool magnetic = true;
};

inline constexpr int kPos = 0;
inline constexpr int kVel = 3;
inline constexpr int kJoints = 6;
inline constexpr int kIpmDim = 6;

inline Vec3 epm_dipole_direction(const kinematics::EpmPose& pose,
                                 const PlantModel& model) {
  return pose.rotation * model.epm.axis_in_mount_frame;
}

inline Vec3 magnetic_force(const Vec3& p_ipm,
                           const kinematics::EpmPose& pose,
                           const PlantModel& model) {
  const magnetics::Separation sep(p_ipm - pose.position, model.min_separation);
  return magnetics::aligned_force(sep, epm_dipole_direction(pose, model),
                                  model.epm.dipole_magnitude,
                                  model.ipm.dipole_magnitude);
}

inline Vec3 drag_force(const Vec3& v, const FluidParams& fluid) {
  return fluid.drag_coefficient * v.norm() * v;
}

/// dv/dt = (f_m + f_w − f_d) / m
inline Vec3 ipm_acceleration(const Vec3& p, const Vec3& v,
                             const kinematics::EpmPose& pose,
                             const PlantModel& model) {
  Vec3 f = model.fluid.effective_weight - drag_force(v, model.fluid);
  if (model.magnetic) f += magnetic_force(p, pose, model);
  return f / model.fluid.ipm_mass;
}

using IpmState = Eigen::Matrix<double, kIpmDim, 1>;

/// RK4 over the IPM states for one interval while the joints move at the
/// constant rate u; the EPM pose at each stage is taken at q + u·t.
inline IpmState propagate_ipm(const IpmState& s, const JointVec& q,
                              const ControlVec& u, double dt,
                              const PlantModel& model) {
  auto deriv = [&](const IpmState& y, double t, int stage) {
    const JointVec qt = q + u * t;
    const auto pose = kinematics::forward_kinematics(model.dh, qt);
    IpmState dy;
    dy.head<3>() = y.tail<3>();
    try {
      dy.tail<3>() = ipm_acceleration(y.head<3>(), y.tail<3>(), pose, model);
    } catch (const DomainError& e) {
      throw DomainError(std::string(e.what()) + " (RK4 stage " +
                        std::to_string(stage) + ")");
    }
    return dy;
  };
  const double h = dt;
  const IpmState k1 = deriv(s, 0.0, 1);
  const IpmState k2 = deriv(s + 0.5 * h * k1, 0.5 * h, 2);
  const IpmState k3 = deriv(s + 0.5 * h * k2, 0.5 * h, 3);
  const IpmState k4 = deriv(s + h * k3, h, 4);
  return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline StateVec step(const StateVec& x, const ControlVec& u, double dt,
                     const PlantModel& model) {
  if (!(dt > 0.0)) throw ContractError("step: dt must be > 0");
  StateVec next;
  const JointVec q = x.segment<kNumJoints>(kJoints);
  next.head<kIpmDim>() = propagate_ipm(x.head<kIpmDim>(), q, u, dt, model);
  next.segment<kNumJoints>(kJoints) = q + u * dt;
  return next;
}

struct Linearization {
  Eigen::Matrix<double, kStateDim, kStateDim> fx;
  Eigen::Matrix<double, kStateDim, kControlDim> fu;
};

inline double fd_step(double v) { return 1e-6 * (1.0 + std::abs(v)); }

/// Jacobians of step(). The joint rows are exact (q' = q + uΔt); the IPM rows
/// come from central differences of propagate_ipm.
inline Linearization linearize(const StateVec& x, const ControlVec& u,
                               double dt, const PlantModel& model) {
  Linearization lin;
  lin.fx.setZero();
  lin.fu.setZero();
  lin.fx.bottomRightCorner<kNumJoints, kNumJoints>().setIdentity();
  lin.fu.bottomRows<kNumJoints>() =
      dt * Eigen::Matrix<double, kNumJoints, kNumJoints>::Identity();

  const IpmState s = x.head<kIpmDim>();
  const JointVec q = x.segment<kNumJoints>(kJoints);
  for (int j = 0; j < kStateDim; ++j) {
    const double h = fd_step(x[j]);
    IpmState sp = s, sm = s;
    JointVec qp = q, qm = q;
    if (j < kIpmDim) {
      sp[j] += h;
      sm[j] -= h;
    } else {
      qp[j - kIpmDim] += h;
      qm[j - kIpmDim] -= h;
    }
    lin.fx.block<kIpmDim, 1>(0, j) =
        (propagate_ipm(sp, qp, u, dt, model) -
         propagate_ipm(sm, qm, u, dt, model)) / (2.0 * h);
  }
  for (int j = 0; j < kControlDim; ++j) {
    const double h = fd_step(u[j]);
    ControlVec up = u, um = u;
    up[j] += h;
    um[j] -= h;
    lin.fu.block<kIpmDim, 1>(0, j) =
        (propagate_ipm(s, q, up, dt, model) -
         propagate_ipm(s, q, um, dt, model)) / (2.0 * h);
  }
  return lin;
}

inline StateVec make_state(const Vec3& p, const Vec3& v, const JointVec& q) {
  StateVec x;
  x << p, v, q;
  return x;
}

}  // namespace magnav::plant

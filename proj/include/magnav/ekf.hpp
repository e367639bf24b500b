#pragma once

// Extended Kalman filter over the IPM position and velocity. The joint
// angles are read from encoders and enter only as known inputs.

#include "magnav/plant.hpp"
#include "magnav/scenario.hpp"

namespace magnav::ekf {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct EkfState {
  Vec6 mean = Vec6::Zero();
  Mat6 covariance = Mat6::Identity();
};

struct EkfConfig {
  double accel_variance = 1e-6;  // (m/s²)², process noise density
  EkfModel model = EkfModel::kFullDynamics;
};

struct PredictResult {
  EkfState state;
  bool fallback = false;  // magnetic model invalid; drag+weight only
};

/// Process noise of a white acceleration held over one step.
inline Mat6 process_noise(double accel_variance, double dt) {
  Eigen::Matrix<double, 6, 3> g;
  g << 0.5 * dt * dt * Mat3::Identity(), dt * Mat3::Identity();
  return accel_variance * g * g.transpose();
}

inline Vec6 propagate_mean(const Vec6& s, const JointVec& q,
                           const ControlVec& u, double dt,
                           const plant::PlantModel& model, EkfModel kind) {
  if (kind == EkfModel::kConstantVelocity) {
    Vec6 out = s;
    out.head<3>() += dt * s.tail<3>();
    return out;
  }
  return plant::propagate_ipm(s, q, u, dt, model);
}

/// Central-difference Jacobian of the 6-state mean propagation.
inline Mat6 transition_jacobian(const Vec6& s, const JointVec& q,
                                const ControlVec& u, double dt,
                                const plant::PlantModel& model, EkfModel kind) {
  Mat6 f;
  for (int j = 0; j < 6; ++j) {
    const double h = plant::fd_step(s[j]);
    Vec6 sp = s, sm = s;
    sp[j] += h;
    sm[j] -= h;
    f.col(j) = (propagate_mean(sp, q, u, dt, model, kind) -
                propagate_mean(sm, q, u, dt, model, kind)) / (2.0 * h);
  }
  return f;
}

/// Propagates over one control interval during which the joints start at q
/// and move at rate u.
inline PredictResult ekf_predict(const EkfState& ekf, const JointVec& q,
                                 const ControlVec& u, double dt,
                                 const plant::PlantModel& model,
                                 const EkfConfig& cfg) {
  if (!(dt > 0.0)) throw ContractError("ekf_predict: dt must be > 0");
  PredictResult out;
  Mat6 f;
  try {
    out.state.mean = propagate_mean(ekf.mean, q, u, dt, model, cfg.model);
    f = transition_jacobian(ekf.mean, q, u, dt, model, cfg.model);
  } catch (const DomainError&) {
    plant::PlantModel inert = model;
    inert.magnetic = false;
    out.fallback = true;
    out.state.mean = propagate_mean(ekf.mean, q, u, dt, inert, cfg.model);
    f = transition_jacobian(ekf.mean, q, u, dt, inert, cfg.model);
  }
  Mat6 p = f * ekf.covariance * f.transpose() + process_noise(cfg.accel_variance, dt);
  out.state.covariance = 0.5 * (p + p.transpose());
  return out;
}

struct UpdateResult {
  EkfState state;
  bool rejected = false;
};

/// Position-only measurement update (H = [I 0]) in Joseph form.
inline UpdateResult ekf_update(const EkfState& ekf, const Vec3& z,
                               double measurement_variance) {
  if (!(measurement_variance > 0.0)) {
    throw ContractError("ekf_update: measurement variance must be > 0");
  }
  UpdateResult out{ekf, false};
  if (!z.allFinite()) {
    out.rejected = true;
    return out;
  }
  Eigen::Matrix<double, 3, 6> h = Eigen::Matrix<double, 3, 6>::Zero();
  h.leftCols<3>().setIdentity();
  const Mat3 r = measurement_variance * Mat3::Identity();
  const Mat3 s = h * ekf.covariance * h.transpose() + r;
  const Eigen::Matrix<double, 6, 3> k =
      ekf.covariance * h.transpose() * s.ldlt().solve(Mat3::Identity());
  out.state.mean = ekf.mean + k * (z - ekf.mean.head<3>());
  const Mat6 a = Mat6::Identity() - k * h;
  const Mat6 p = a * ekf.covariance * a.transpose() + k * r * k.transpose();
  out.state.covariance = 0.5 * (p + p.transpose());
  return out;
}

}  // namespace magnav::ekf

#pragma once

// Navigation constraints for the EPM/IPM system and the augmented Lagrangian
// machinery that folds them into the iLQR cost.

#include <array>
#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "magnav/expansion.hpp"
#include "magnav/plant.hpp"

namespace magnav::constraints {

struct Obstacle {
  Vec3 center = Vec3::Zero();
  double radius = 0.01;
  double margin = 0.0;
};

struct OrientationTarget {
  bool enabled = false;
  Vec3 direction = -Vec3::UnitZ();  // unit; field direction at the IPM
  bool every_step = true;           // false: terminal state only
};

struct ConstraintSet {
  JointVec q_min = JointVec::Constant(-kPi);
  JointVec q_max = JointVec::Constant(kPi);
  ControlVec u_min = ControlVec::Constant(-2.0);
  ControlVec u_max = ControlVec::Constant(2.0);
  Vec3 v_min = Vec3::Constant(-0.2);
  Vec3 v_max = Vec3::Constant(0.2);
  std::array<std::optional<double>, 3> epm_min_position{};
  std::vector<Obstacle> obstacles;
  OrientationTarget orientation;

  void validate() const {
    for (int i = 0; i < kNumJoints; ++i) {
      if (!(q_min[i] < q_max[i])) {
        throw ContractError("joint_limits: q_min[" + std::to_string(i) +
                            "] must be < q_max[" + std::to_string(i) + "]");
      }
      if (!(u_min[i] <= u_max[i])) {
        throw ContractError("input_limits: u_min[" + std::to_string(i) +
                            "] must be <= u_max[" + std::to_string(i) + "]");
      }
    }
    for (int i = 0; i < 3; ++i) {
      if (!(v_min[i] <= v_max[i])) {
        throw ContractError("ipm_velocity_limits: v_min[" +
                            std::to_string(i) + "] must be <= v_max");
      }
    }
    for (std::size_t i = 0; i < obstacles.size(); ++i) {
      if (!(obstacles[i].radius > 0.0) || !(obstacles[i].margin >= 0.0)) {
        throw ContractError("obstacles[" + std::to_string(i) +
                            "]: radius must be > 0 and margin >= 0");
      }
    }
    if (orientation.enabled &&
        std::abs(orientation.direction.norm() - 1.0) > 1e-9) {
      throw ContractError("orientation.target must be a unit vector");
    }
  }
};

/// Row ranges of the stacked constraint vector. Stage rows (with inputs):
///   [q − q_max | q_min − q | u − u_max | u_min − u | v − v_max | v_min − v |
///    p_E,min − p_E (bounded axes) | −d(p_I) per obstacle | b̂ − r̂ (eq, 3)]
/// Terminal rows drop the two input blocks.
struct RowLayout {
  int joint_upper = 0, joint_lower = 0;
  int input_upper = -1, input_lower = -1;
  int velocity_upper = 0, velocity_lower = 0;
  int epm_floor = 0, num_epm_floor = 0;
  int obstacle = 0, num_obstacles = 0;
  int orientation = -1;
  int total = 0;
  int num_inequalities = 0;

  static RowLayout make(const ConstraintSet& cs, bool with_inputs,
                        bool with_orientation) {
    RowLayout l;
    int r = 0;
    l.joint_upper = r; r += kNumJoints;
    l.joint_lower = r; r += kNumJoints;
    if (with_inputs) {
      l.input_upper = r; r += kControlDim;
      l.input_lower = r; r += kControlDim;
    }
    l.velocity_upper = r; r += 3;
    l.velocity_lower = r; r += 3;
    l.epm_floor = r;
    for (const auto& b : cs.epm_min_position) l.num_epm_floor += b ? 1 : 0;
    r += l.num_epm_floor;
    l.obstacle = r;
    l.num_obstacles = static_cast<int>(cs.obstacles.size());
    r += l.num_obstacles;
    l.num_inequalities = r;
    if (with_orientation) {
      l.orientation = r;
      r += 3;
    }
    l.total = r;
    return l;
  }
};

/// Signed clearance d(p) = |p − c| − r − ε; feasible when d ≥ 0.
inline double obstacle_clearance(const Vec3& p, const Obstacle& ob) {
  return (p - ob.center).norm() - ob.radius - ob.margin;
}

/// Unit field direction at the IPM for the EPM pose given by q.
inline Vec3 field_direction(const Vec3& p_ipm, const JointVec& q,
                            const plant::PlantModel& model) {
  const auto pose = kinematics::forward_kinematics(model.dh, q);
  const magnetics::Separation sep(p_ipm - pose.position, model.min_separation);
  const Vec3 b = magnetics::dipole_field(
      sep, model.epm.dipole_magnitude * plant::epm_dipole_direction(pose, model));
  return b.normalized();
}

/// Evaluates the stacked rows for (x, u); pass `u == nullptr` for the
/// terminal state. Jacobians are filled when `derivatives` is set.
inline ConstraintEval evaluate_constraints(const StateVec& x,
                                           const ControlVec* u,
                                           const ConstraintSet& cs,
                                           const plant::PlantModel& model,
                                           bool with_orientation,
                                           bool derivatives = false) {
  const RowLayout l = RowLayout::make(cs, u != nullptr, with_orientation);
  const Vec3 p = x.segment<3>(plant::kPos);
  const Vec3 v = x.segment<3>(plant::kVel);
  const JointVec q = x.segment<kNumJoints>(plant::kJoints);

  ConstraintEval c;
  c.g.resize(l.total);
  c.kinds.assign(l.total, RowKind::kInequality);
  if (derivatives) {
    c.gx = MatX::Zero(l.total, kStateDim);
    c.gu = MatX::Zero(l.total, kControlDim);
  }

  c.g.segment<kNumJoints>(l.joint_upper) = q - cs.q_max;
  c.g.segment<kNumJoints>(l.joint_lower) = cs.q_min - q;
  if (u != nullptr) {
    c.g.segment<kControlDim>(l.input_upper) = *u - cs.u_max;
    c.g.segment<kControlDim>(l.input_lower) = cs.u_min - *u;
  }
  c.g.segment<3>(l.velocity_upper) = v - cs.v_max;
  c.g.segment<3>(l.velocity_lower) = cs.v_min - v;

  if (derivatives) {
    for (int i = 0; i < kNumJoints; ++i) {
      c.gx(l.joint_upper + i, plant::kJoints + i) = 1.0;
      c.gx(l.joint_lower + i, plant::kJoints + i) = -1.0;
    }
    if (u != nullptr) {
      for (int i = 0; i < kControlDim; ++i) {
        c.gu(l.input_upper + i, i) = 1.0;
        c.gu(l.input_lower + i, i) = -1.0;
      }
    }
    for (int i = 0; i < 3; ++i) {
      c.gx(l.velocity_upper + i, plant::kVel + i) = 1.0;
      c.gx(l.velocity_lower + i, plant::kVel + i) = -1.0;
    }
  }

  if (l.num_epm_floor > 0) {
    const auto pose = kinematics::forward_kinematics(model.dh, q);
    MatX jac;
    if (derivatives) jac = kinematics::geometric_jacobian(model.dh, q);
    int r = l.epm_floor;
    for (int axis = 0; axis < 3; ++axis) {
      if (!cs.epm_min_position[axis]) continue;
      c.g[r] = *cs.epm_min_position[axis] - pose.position[axis];
      if (derivatives) {
        c.gx.block<1, kNumJoints>(r, plant::kJoints) = -jac.row(axis);
      }
      ++r;
    }
  }

  for (int i = 0; i < l.num_obstacles; ++i) {
    const auto& ob = cs.obstacles[i];
    const int r = l.obstacle + i;
    c.g[r] = -obstacle_clearance(p, ob);
    if (derivatives) {
      const Vec3 diff = p - ob.center;
      const double n = diff.norm();
      if (n > 0.0) c.gx.block<1, 3>(r, plant::kPos) = -diff.transpose() / n;
    }
  }

  if (l.orientation >= 0) {
    const int r = l.orientation;
    for (int i = 0; i < 3; ++i) c.kinds[r + i] = RowKind::kEquality;
    c.g.segment<3>(r) = field_direction(p, q, model) - cs.orientation.direction;
    if (derivatives) {
      for (int j = 0; j < 3 + kNumJoints; ++j) {
        const int col = j < 3 ? plant::kPos + j : plant::kJoints + (j - 3);
        const double h = plant::fd_step(x[col]);
        StateVec xp = x, xm = x;
        xp[col] += h;
        xm[col] -= h;
        c.gx.block<3, 1>(r, col) =
            (field_direction(xp.segment<3>(plant::kPos),
                             xp.segment<kNumJoints>(plant::kJoints), model) -
             field_direction(xm.segment<3>(plant::kPos),
                             xm.segment<kNumJoints>(plant::kJoints), model)) /
            (2.0 * h);
      }
    }
  }
  return c;
}

// --- augmented Lagrangian ---------------------------------------------------

struct AlParams {
  double mu_initial = 1.0;
  double mu_scale = 10.0;  // φ
  double mu_max = 1e8;
};

struct AlState {
  std::vector<VecX> lambda;                 // one block per timestep 0..N
  std::vector<std::vector<RowKind>> kinds;  // matching row kinds
  double mu = 1.0;
  AlParams params;

  static AlState make(const std::vector<std::vector<RowKind>>& kinds,
                      const AlParams& params) {
    if (!(params.mu_initial > 0.0)) {
      throw ContractError("AL penalty mu must be > 0");
    }
    AlState s;
    s.kinds = kinds;
    s.params = params;
    s.mu = params.mu_initial;
    s.lambda.reserve(kinds.size());
    for (const auto& k : kinds) {
      s.lambda.push_back(VecX::Zero(static_cast<Eigen::Index>(k.size())));
    }
    return s;
  }
};

/// Diagonal of I_μ: μ on equality rows and on inequality rows that are
/// violated or carry a positive multiplier, 0 elsewhere.
inline VecX active_penalty(const VecX& g, const VecX& lambda,
                           const std::vector<RowKind>& kinds, double mu) {
  VecX diag(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const bool active = kinds[i] == RowKind::kEquality || g[i] >= 0.0 ||
                        lambda[i] > 0.0;
    diag[i] = active ? mu : 0.0;
  }
  return diag;
}

/// ℓ + (λ + ½ I_μ g)ᵀ g, with Gauss-Newton Hessian gᵀ_x I_μ g_x.
/// `con` may omit Jacobians, in which case only the value is augmented.
inline CostExpansion al_cost(CostExpansion base, const ConstraintEval& con,
                             const VecX& lambda, double mu) {
  if (lambda.size() != con.g.size() ||
      static_cast<Eigen::Index>(con.kinds.size()) != con.g.size()) {
    throw ContractError("al_cost: multiplier has " +
                        std::to_string(lambda.size()) + " rows, constraint has " +
                        std::to_string(con.g.size()));
  }
  const VecX imu = active_penalty(con.g, lambda, con.kinds, mu);
  const VecX weighted = imu.cwiseProduct(con.g);
  base.value += (lambda + 0.5 * weighted).dot(con.g);
  if (con.gx.size() > 0 && base.lx.size() > 0) {
    const VecX dual = lambda + weighted;
    base.lx += con.gx.transpose() * dual;
    base.lxx += con.gx.transpose() * imu.asDiagonal() * con.gx;
    if (con.gu.size() > 0 && base.lu.size() > 0) {
      base.lu += con.gu.transpose() * dual;
      base.luu += con.gu.transpose() * imu.asDiagonal() * con.gu;
      base.lux += con.gu.transpose() * imu.asDiagonal() * con.gx;
    }
  }
  return base;
}

/// Multiplier step λ ← max(0, λ + μg) (inequalities) / λ + μh (equalities),
/// followed by μ ← min(φμ, μ_max).
inline AlState update_multipliers(AlState al, const std::vector<VecX>& g_traj) {
  if (g_traj.size() != al.lambda.size()) {
    throw ContractError("update_multipliers: trajectory length mismatch");
  }
  for (std::size_t k = 0; k < g_traj.size(); ++k) {
    if (g_traj[k].size() != al.lambda[k].size()) {
      throw ContractError("update_multipliers: row count mismatch at k=" +
                          std::to_string(k));
    }
    for (Eigen::Index i = 0; i < g_traj[k].size(); ++i) {
      double& lam = al.lambda[k][i];
      lam += al.mu * g_traj[k][i];
      if (al.kinds[k][i] == RowKind::kInequality) lam = std::max(0.0, lam);
    }
  }
  al.mu = std::min(al.mu * al.params.mu_scale, al.params.mu_max);
  return al;
}

// --- manipulability ---------------------------------------------------------

struct PenaltyExpansion {
  double value = 0.0;
  JointVec gradient = JointVec::Zero();
  Eigen::Matrix<double, kNumJoints, kNumJoints> hessian =
      Eigen::Matrix<double, kNumJoints, kNumJoints>::Zero();
};

/// Monotone penalty on the Jacobian condition number: (ln κ)².
inline double condition_penalty(double kappa) {
  const double l = std::log(std::max(kappa, 1.0));
  return l * l;
}

inline double log_condition(const JointVec& q, const kinematics::DhTable& dh) {
  return std::log(std::max(
      1.0, kinematics::condition_number(kinematics::geometric_jacobian(dh, q))));
}

/// weight·(ln κ(J(q)))² with a central-difference gradient and the
/// Gauss-Newton Hessian 2·weight·∇lnκ ∇lnκᵀ.
inline PenaltyExpansion manipulability_penalty(const JointVec& q,
                                               const kinematics::DhTable& dh,
                                               double weight,
                                               bool derivatives = true) {
  PenaltyExpansion out;
  if (weight == 0.0) return out;
  const double l = log_condition(q, dh);
  out.value = weight * l * l;
  if (!derivatives) return out;
  JointVec dl;
  for (int i = 0; i < kNumJoints; ++i) {
    const double h = 1e-6;
    JointVec qp = q, qm = q;
    qp[i] += h;
    qm[i] -= h;
    dl[i] = (log_condition(qp, dh) - log_condition(qm, dh)) / (2.0 * h);
  }
  out.gradient = 2.0 * weight * l * dl;
  out.hessian = 2.0 * weight * dl * dl.transpose();
  return out;
}

}  // namespace magnav::constraints

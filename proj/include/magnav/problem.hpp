#pragma once

// The capsule navigation problem expressed for the iLQR solver, plus the
// equilibrium seed used when a scenario leaves the initial arm pose open.

#include <string>
#include <vector>

#include "magnav/ilqr.hpp"
#include "magnav/scenario.hpp"

namespace magnav {

class CapsuleProblem {
 public:
  explicit CapsuleProblem(const Scenario& sc)
      : sc_(sc), goal_(sc.goal_state()) {}

  Eigen::Index state_dim() const { return kStateDim; }
  Eigen::Index control_dim() const { return kControlDim; }
  int horizon() const { return sc_.horizon; }
  double dt() const { return sc_.dt; }
  const Scenario& scenario() const { return sc_; }

  VecX dynamics(int, const VecX& x, const VecX& u) const {
    return plant::step(x, u, sc_.dt, sc_.model);
  }

  void linearize(int, const VecX& x, const VecX& u, MatX& fx, MatX& fu) const {
    const auto lin = plant::linearize(x, u, sc_.dt, sc_.model);
    fx = lin.fx;
    fu = lin.fu;
  }

  CostExpansion stage_cost(int, const VecX& x, const VecX& u,
                           bool derivs) const {
    const StateVec dx = x - goal_;
    const auto& w = sc_.weights;
    CostExpansion e = CostExpansion::zero(kStateDim, kControlDim);
    e.value = dx.dot(w.state.cwiseProduct(dx)) + u.dot(w.input.cwiseProduct(u));
    const auto manip = constraints::manipulability_penalty(
        x.segment<kNumJoints>(plant::kJoints), sc_.model.dh, w.manipulability,
        derivs);
    e.value += manip.value;
    if (derivs) {
      e.lx = 2.0 * w.state.cwiseProduct(dx);
      e.lu = 2.0 * w.input.cwiseProduct(u);
      e.lxx.diagonal() = 2.0 * w.state;
      e.luu.diagonal() = 2.0 * w.input;
      e.lx.segment<kNumJoints>(plant::kJoints) += manip.gradient;
      e.lxx.block<kNumJoints, kNumJoints>(plant::kJoints, plant::kJoints) +=
          manip.hessian;
    }
    return e;
  }

  CostExpansion terminal_cost(const VecX& x, bool derivs) const {
    const StateVec dx = x - goal_;
    const auto& w = sc_.weights;
    CostExpansion e = CostExpansion::zero(kStateDim, 0);
    e.value = dx.dot(w.terminal.cwiseProduct(dx));
    if (derivs) {
      e.lx = 2.0 * w.terminal.cwiseProduct(dx);
      e.lxx.diagonal() = 2.0 * w.terminal;
    }
    return e;
  }

  ConstraintEval stage_constraints(int, const VecX& x, const VecX& u,
                                   bool derivs) const {
    const StateVec xs = x;
    const ControlVec us = u;
    return backed_off(constraints::evaluate_constraints(
        xs, &us, sc_.constraints, sc_.model, stage_orientation(), derivs));
  }

  ConstraintEval terminal_constraints(const VecX& x, bool derivs) const {
    const StateVec xs = x;
    ConstraintEval c = constraints::evaluate_constraints(
        xs, nullptr, sc_.constraints, sc_.model,
        sc_.constraints.orientation.enabled, derivs);
    if (derivs) c.gu.resize(0, 0);
    return backed_off(std::move(c));
  }

 private:
  ConstraintEval backed_off(ConstraintEval c) const {
    if (sc_.constraint_backoff == 0.0) return c;
    for (Eigen::Index i = 0; i < c.g.size(); ++i) {
      if (c.kinds[i] == RowKind::kInequality) c.g[i] += sc_.constraint_backoff;
    }
    return c;
  }

  bool stage_orientation() const {
    return sc_.constraints.orientation.enabled &&
           sc_.constraints.orientation.every_step;
  }

  const Scenario& sc_;
  StateVec goal_;
};

static_assert(ilqr::Problem<CapsuleProblem>);

struct PlanResult {
  ilqr::Trajectory trajectory;
  ilqr::GainSchedule gains;
  ilqr::SolverReport report;
};

/// Plans from the scenario's initial state with u ≡ 0 (or `warm_start`).
inline PlanResult plan(const Scenario& sc,
                       const std::vector<VecX>* warm_start = nullptr) {
  const StateVec x0 = sc.initial_state();
  PlanResult out;
  try {
    const auto pose = kinematics::forward_kinematics(
        sc.model.dh, x0.segment<kNumJoints>(plant::kJoints));
    magnetics::Separation(x0.head<3>() - pose.position, sc.model.min_separation);
  } catch (const DomainError& e) {
    out.report.status = ilqr::SolverStatus::kInfeasibleStart;
    out.report.message = e.what();
    return out;
  }
  std::vector<VecX> u0 =
      warm_start ? *warm_start
                 : std::vector<VecX>(sc.horizon, VecX::Zero(kControlDim));
  CapsuleProblem prob(sc);
  auto res = ilqr::solve(prob, x0, u0, sc.dt, sc.solver);
  out.trajectory = std::move(res.trajectory);
  out.gains = std::move(res.gains);
  out.report = std::move(res.report);
  return out;
}

class EquilibriumError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EquilibriumOptions {
  double force_tolerance = 1e-6;      // N
  double direction_tolerance = 1e-4;  // rad
  int max_iterations = 200;
};

/// Joint angles that hold the IPM at `p_ipm` (magnetic force cancels the
/// effective weight) with the field pointing along `direction`. Damped
/// minimum-norm Gauss-Newton from `guess`.
inline JointVec equilibrium_seed(const plant::PlantModel& model,
                                 const Vec3& p_ipm, const Vec3& direction,
                                 const JointVec& guess,
                                 const constraints::ConstraintSet& cs,
                                 const EquilibriumOptions& opt = {}) {
  const Vec3 r_hat = direction.normalized();
  const double force_scale =
      std::max(model.fluid.effective_weight.norm(), 1e-4);
  using Res = Eigen::Matrix<double, 6, 1>;
  auto residual = [&](const JointVec& q) {
    const auto pose = kinematics::forward_kinematics(model.dh, q);
    Res r;
    r.head<3>() = (plant::magnetic_force(p_ipm, pose, model) +
                   model.fluid.effective_weight) / force_scale;
    r.tail<3>() = constraints::field_direction(p_ipm, q, model) - r_hat;
    return r;
  };
  auto converged = [&](const JointVec& q) {
    const auto pose = kinematics::forward_kinematics(model.dh, q);
    const double fe =
        (plant::magnetic_force(p_ipm, pose, model) + model.fluid.effective_weight)
            .norm();
    const Vec3 b = constraints::field_direction(p_ipm, q, model);
    const double ang = std::atan2(b.cross(r_hat).norm(), b.dot(r_hat));
    return fe < opt.force_tolerance * 1e-3 && ang < opt.direction_tolerance * 1e-3;
  };

  JointVec q = guess;
  double damping = 1e-6;
  try {
    Res r = residual(q);
    for (int it = 0; it < opt.max_iterations && !converged(q); ++it) {
      Eigen::Matrix<double, 6, kNumJoints> jac;
      for (int j = 0; j < kNumJoints; ++j) {
        JointVec qp = q, qm = q;
        qp[j] += 1e-7;
        qm[j] -= 1e-7;
        jac.col(j) = (residual(qp) - residual(qm)) / 2e-7;
      }
      const Eigen::Matrix<double, 6, 6> jjt =
          jac * jac.transpose() +
          damping * Eigen::Matrix<double, 6, 6>::Identity();
      JointVec dq = -jac.transpose() * jjt.ldlt().solve(r);
      const double max_step = 0.2;
      if (dq.cwiseAbs().maxCoeff() > max_step) {
        dq *= max_step / dq.cwiseAbs().maxCoeff();
      }
      const JointVec q_new = q + dq;
      Res r_new;
      bool ok = true;
      try {
        r_new = residual(q_new);
      } catch (const DomainError&) {
        ok = false;
      }
      if (ok && r_new.norm() < r.norm()) {
        q = q_new;
        r = r_new;
        damping = std::max(damping / 10.0, 1e-12);
      } else {
        damping *= 10.0;
        if (damping > 1e6) break;
      }
    }
  } catch (const DomainError& e) {
    throw EquilibriumError(std::string("equilibrium seed: ") + e.what());
  }

  const auto pose = kinematics::forward_kinematics(model.dh, q);
  const double fe =
      (plant::magnetic_force(p_ipm, pose, model) + model.fluid.effective_weight)
          .norm();
  const Vec3 b = constraints::field_direction(p_ipm, q, model);
  const double ang = std::atan2(b.cross(r_hat).norm(), b.dot(r_hat));
  if (!(fe < opt.force_tolerance) || !(ang < opt.direction_tolerance)) {
    throw EquilibriumError(
        "equilibrium seed: no force balance found (residual " +
        std::to_string(fe) + " N, " + std::to_string(ang) +
        " rad); move the IPM start or the arm home pose");
  }
  for (int i = 0; i < kNumJoints; ++i) {
    if (q[i] < cs.q_min[i] || q[i] > cs.q_max[i]) {
      throw EquilibriumError("equilibrium seed: joint " + std::to_string(i) +
                             " leaves its limits; adjust the workspace or "
                             "home pose");
    }
  }
  return q;
}

/// Fills scenario.initial_joints from the equilibrium seed when absent.
inline void resolve_initial_joints(Scenario& sc) {
  if (sc.initial_joints) return;
  const Vec3 dir = sc.constraints.orientation.enabled
                       ? sc.constraints.orientation.direction
                       : Vec3(-Vec3::UnitZ());
  sc.initial_joints = equilibrium_seed(sc.model, sc.initial_position, dir,
                                       sc.home_joints, sc.constraints);
}

}  // namespace magnav

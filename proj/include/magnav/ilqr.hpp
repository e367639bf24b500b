#pragma once

// Constrained iLQR: Gauss-Newton backward pass, backtracking forward pass and
// an augmented Lagrangian outer loop.
//
// A Problem supplies
//   Eigen::Index state_dim() const, control_dim() const;
//   int horizon() const;                       // N
//   VecX dynamics(int k, const VecX& x, const VecX& u) const;
//   void linearize(int k, const VecX& x, const VecX& u, MatX& fx, MatX& fu) const;
//   CostExpansion stage_cost(int k, const VecX& x, const VecX& u, bool derivs) const;
//   CostExpansion terminal_cost(const VecX& x, bool derivs) const;
//   ConstraintEval stage_constraints(int k, const VecX& x, const VecX& u, bool derivs) const;
//   ConstraintEval terminal_constraints(const VecX& x, bool derivs) const;
// dynamics() may throw DomainError when a state leaves the model's domain.

#include <algorithm>
#include <chrono>
#include <concepts>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "magnav/constraints.hpp"
#include "magnav/expansion.hpp"

namespace magnav::ilqr {

template <class P>
concept Problem = requires(const P& p, int k, const VecX& x, const VecX& u,
                           MatX& m, bool b) {
  { p.state_dim() } -> std::convertible_to<Eigen::Index>;
  { p.control_dim() } -> std::convertible_to<Eigen::Index>;
  { p.horizon() } -> std::convertible_to<int>;
  { p.dynamics(k, x, u) } -> std::convertible_to<VecX>;
  p.linearize(k, x, u, m, m);
  { p.stage_cost(k, x, u, b) } -> std::convertible_to<CostExpansion>;
  { p.terminal_cost(x, b) } -> std::convertible_to<CostExpansion>;
  { p.stage_constraints(k, x, u, b) } -> std::convertible_to<ConstraintEval>;
  { p.terminal_constraints(x, b) } -> std::convertible_to<ConstraintEval>;
};

struct Trajectory {
  std::vector<VecX> states;  // N+1
  std::vector<VecX> inputs;  // N
  double dt = 0.0;
  double cost = 0.0;           // augmented cost under the AL state used
  double max_violation = 0.0;

  int horizon() const { return static_cast<int>(inputs.size()); }
};

struct GainSchedule {
  std::vector<MatX> K;  // nu × nx
  std::vector<VecX> d;  // nu

  int horizon() const { return static_cast<int>(K.size()); }
};

enum class SolverStatus { kConverged, kMaxIterations, kDiverged, kInfeasibleStart };

inline std::string to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::kConverged: return "converged";
    case SolverStatus::kMaxIterations: return "max_iter";
    case SolverStatus::kDiverged: return "diverged";
    case SolverStatus::kInfeasibleStart: return "infeasible_start";
  }
  return "unknown";
}

struct OuterIteration {
  double cost = 0.0;          // base (unaugmented) cost
  double max_violation = 0.0;
  double mu = 0.0;
  int inner_iterations = 0;
  double regularization = 0.0;
};

struct SolverReport {
  std::vector<OuterIteration> outer;
  SolverStatus status = SolverStatus::kMaxIterations;
  std::string message;
  int total_inner_iterations = 0;
  double solve_seconds = 0.0;
};

struct SolverOptions {
  double rho_initial = 1e-6;
  double rho_increase = 10.0;
  double rho_decrease = 2.0;
  double rho_max = 1e6;
  double rho_min = 1e-9;  // below this ρ snaps to 0
  double tol_cost = 1e-6;  // relative
  double tol_con = 1e-3;
  int max_inner = 100;
  int max_outer = 30;
  int line_search_steps = 11;  // α = 1, 1/2, …, 2^-10
  constraints::AlParams al;
};

struct BackwardResult {
  GainSchedule gains;
  double dv1 = 0.0;  // Σ dᵀQ_u
  double dv2 = 0.0;  // Σ ½ dᵀQ_uu d
  bool ok = false;
  int failed_at = -1;
};

/// Augmented stage/terminal expansions along a trajectory.
template <Problem P>
CostExpansion augmented_stage(const P& prob, int k, const VecX& x,
                              const VecX& u, const constraints::AlState& al,
                              bool derivs) {
  return constraints::al_cost(prob.stage_cost(k, x, u, derivs),
                              prob.stage_constraints(k, x, u, derivs),
                              al.lambda[k], al.mu);
}

template <Problem P>
CostExpansion augmented_terminal(const P& prob, const VecX& x,
                                 const constraints::AlState& al, bool derivs) {
  const int n = prob.horizon();
  return constraints::al_cost(prob.terminal_cost(x, derivs),
                              prob.terminal_constraints(x, derivs),
                              al.lambda[n], al.mu);
}

/// Fills cost and max_violation of `traj` for the given AL state.
template <Problem P>
void evaluate(const P& prob, const constraints::AlState& al, Trajectory& traj) {
  const int n = prob.horizon();
  double cost = 0.0, viol = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto con = prob.stage_constraints(k, traj.states[k], traj.inputs[k], false);
    cost += constraints::al_cost(
                prob.stage_cost(k, traj.states[k], traj.inputs[k], false), con,
                al.lambda[k], al.mu)
                .value;
    viol = std::max(viol, max_violation(con));
  }
  const auto con = prob.terminal_constraints(traj.states[n], false);
  cost += constraints::al_cost(prob.terminal_cost(traj.states[n], false), con,
                               al.lambda[n], al.mu)
              .value;
  viol = std::max(viol, max_violation(con));
  traj.cost = cost;
  traj.max_violation = viol;
}

template <Problem P>
double base_cost(const P& prob, const Trajectory& traj) {
  const int n = prob.horizon();
  double cost = 0.0;
  for (int k = 0; k < n; ++k) {
    cost += prob.stage_cost(k, traj.states[k], traj.inputs[k], false).value;
  }
  return cost + prob.terminal_cost(traj.states[n], false).value;
}

template <Problem P>
std::vector<std::vector<RowKind>> constraint_kinds(const P& prob,
                                                   const Trajectory& traj) {
  const int n = prob.horizon();
  std::vector<std::vector<RowKind>> kinds;
  kinds.reserve(n + 1);
  for (int k = 0; k < n; ++k) {
    kinds.push_back(
        prob.stage_constraints(k, traj.states[k], traj.inputs[k], false).kinds);
  }
  kinds.push_back(prob.terminal_constraints(traj.states[n], false).kinds);
  return kinds;
}

template <Problem P>
std::vector<VecX> constraint_values(const P& prob, const Trajectory& traj) {
  const int n = prob.horizon();
  std::vector<VecX> g;
  g.reserve(n + 1);
  for (int k = 0; k < n; ++k) {
    g.push_back(prob.stage_constraints(k, traj.states[k], traj.inputs[k], false).g);
  }
  g.push_back(prob.terminal_constraints(traj.states[n], false).g);
  return g;
}

/// Simulates the inputs from x0; nullopt if the model domain is left or the
/// state blows up.
template <Problem P>
std::optional<Trajectory> rollout(const P& prob, const VecX& x0,
                                  const std::vector<VecX>& inputs, double dt) {
  Trajectory t;
  t.dt = dt;
  t.inputs = inputs;
  t.states.reserve(inputs.size() + 1);
  t.states.push_back(x0);
  try {
    for (int k = 0; k < static_cast<int>(inputs.size()); ++k) {
      VecX next = prob.dynamics(k, t.states[k], inputs[k]);
      if (!next.allFinite()) return std::nullopt;
      t.states.push_back(std::move(next));
    }
  } catch (const DomainError&) {
    return std::nullopt;
  }
  return t;
}

/// Riccati-like sweep over the quadratized AL problem. Q_uu + ρI must be
/// positive definite at every step or the pass fails.
template <Problem P>
BackwardResult backward_pass(const P& prob, const Trajectory& traj,
                             const constraints::AlState& al, double rho) {
  const int n = prob.horizon();
  const Eigen::Index nx = prob.state_dim(), nu = prob.control_dim();
  BackwardResult res;
  res.gains.K.assign(n, MatX::Zero(nu, nx));
  res.gains.d.assign(n, VecX::Zero(nu));

  CostExpansion term;
  try {
    term = augmented_terminal(prob, traj.states[n], al, true);
  } catch (const DomainError&) {
    res.failed_at = n;
    return res;
  }
  VecX vx = term.lx;
  MatX vxx = term.lxx;
  MatX fx, fu;
  for (int k = n - 1; k >= 0; --k) {
    const auto& x = traj.states[k];
    const auto& u = traj.inputs[k];
    CostExpansion l;
    try {
      l = augmented_stage(prob, k, x, u, al, true);
      prob.linearize(k, x, u, fx, fu);
    } catch (const DomainError&) {
      res.failed_at = k;
      return res;
    }

    const VecX qx = l.lx + fx.transpose() * vx;
    const VecX qu = l.lu + fu.transpose() * vx;
    const MatX vxx_fx = vxx * fx;
    const MatX qxx = l.lxx + fx.transpose() * vxx_fx;
    const MatX quu = l.luu + fu.transpose() * vxx * fu;
    const MatX qux = l.lux + fu.transpose() * vxx_fx;

    MatX quu_reg = quu;
    quu_reg.diagonal().array() += rho;
    Eigen::LLT<MatX> llt(quu_reg);
    if (llt.info() != Eigen::Success) {
      res.failed_at = k;
      return res;
    }
    MatX& K = res.gains.K[k];
    VecX& d = res.gains.d[k];
    K = -llt.solve(qux);
    d = -llt.solve(qu);
    if (!K.allFinite() || !d.allFinite()) {
      res.failed_at = k;
      return res;
    }

    vx = qx + K.transpose() * quu * d + K.transpose() * qu + qux.transpose() * d;
    vxx = qxx + K.transpose() * quu * K + K.transpose() * qux +
          qux.transpose() * K;
    vxx = 0.5 * (vxx + vxx.transpose());
    res.dv1 += d.dot(qu);
    res.dv2 += 0.5 * d.dot(quu * d);
  }
  res.ok = true;
  return res;
}

/// u_k = ū_k + α d_k + K_k (x_k − x̄_k), rolled out from the same x_0.
template <Problem P>
std::optional<Trajectory> forward_pass(const P& prob, const Trajectory& traj,
                                       const GainSchedule& gains, double alpha,
                                       const constraints::AlState& al) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ContractError("forward_pass: step scale must lie in [0, 1]");
  }
  const int n = prob.horizon();
  Trajectory out;
  out.dt = traj.dt;
  out.states.reserve(n + 1);
  out.inputs.reserve(n);
  out.states.push_back(traj.states[0]);
  try {
    for (int k = 0; k < n; ++k) {
      VecX u = traj.inputs[k] + alpha * gains.d[k] +
               gains.K[k] * (out.states[k] - traj.states[k]);
      VecX next = prob.dynamics(k, out.states[k], u);
      if (!next.allFinite() || !u.allFinite()) return std::nullopt;
      out.inputs.push_back(std::move(u));
      out.states.push_back(std::move(next));
    }
    evaluate(prob, al, out);
  } catch (const DomainError&) {
    return std::nullopt;
  }
  if (!std::isfinite(out.cost)) return std::nullopt;
  return out;
}

struct SolveResult {
  Trajectory trajectory;
  GainSchedule gains;
  SolverReport report;
  constraints::AlState al;
};

namespace detail {

struct InnerOutcome {
  int iterations = 0;
  bool diverged = false;
};

/// iLQR for fixed (λ, μ). Updates traj in place; rho carries over between
/// calls.
template <Problem P>
InnerOutcome inner_solve(const P& prob, const constraints::AlState& al,
                         const SolverOptions& opt, Trajectory& traj,
                         double& rho) {
  InnerOutcome out;
  for (int it = 0; it < opt.max_inner; ++it) {
    out.iterations = it + 1;
    BackwardResult bp;
    while (true) {
      bp = backward_pass(prob, traj, al, rho);
      if (bp.ok) break;
      rho = std::max(rho * opt.rho_increase, opt.rho_initial);
      if (rho > opt.rho_max) {
        out.diverged = true;
        return out;
      }
    }

    std::optional<Trajectory> accepted;
    double alpha = 1.0;
    for (int ls = 0; ls < opt.line_search_steps; ++ls, alpha *= 0.5) {
      auto cand = forward_pass(prob, traj, bp.gains, alpha, al);
      if (cand && cand->cost < traj.cost) {
        accepted = std::move(cand);
        break;
      }
    }

    if (!accepted) {
      // No descent along this direction: stiffen the step, or stop if the
      // model predicts no meaningful decrease anyway.
      const double expected = -(bp.dv1 + bp.dv2);
      if (expected < opt.tol_cost * std::max(1.0, std::abs(traj.cost))) {
        return out;
      }
      rho = std::max(rho * opt.rho_increase, opt.rho_initial);
      if (rho > opt.rho_max) return out;
      continue;
    }

    const double decrease = traj.cost - accepted->cost;
    traj = std::move(*accepted);
    rho /= opt.rho_decrease;
    if (rho < opt.rho_min) rho = 0.0;
    if (decrease < opt.tol_cost * std::max(1.0, std::abs(traj.cost))) {
      return out;
    }
  }
  return out;
}

}  // namespace detail

/// Full constrained solve from x0 with an initial input guess.
template <Problem P>
SolveResult solve(const P& prob, const VecX& x0,
                  const std::vector<VecX>& initial_inputs, double dt,
                  const SolverOptions& opt = {}) {
  const auto t_start = std::chrono::steady_clock::now();
  SolveResult res;
  auto& report = res.report;
  auto finish = [&](SolverStatus status, std::string msg) {
    report.status = status;
    report.message = std::move(msg);
    report.solve_seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - t_start)
                               .count();
    return res;
  };

  if (static_cast<int>(initial_inputs.size()) != prob.horizon()) {
    throw ContractError("solve: initial input guess must have N entries");
  }
  auto initial = rollout(prob, x0, initial_inputs, dt);
  if (!initial) {
    return finish(SolverStatus::kInfeasibleStart,
                  "initial rollout leaves the model domain");
  }
  Trajectory traj = std::move(*initial);
  res.al = constraints::AlState::make(constraint_kinds(prob, traj), opt.al);
  evaluate(prob, res.al, traj);

  double rho = opt.rho_initial;
  SolverStatus status = SolverStatus::kMaxIterations;
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    const auto inner = detail::inner_solve(prob, res.al, opt, traj, rho);
    report.total_inner_iterations += inner.iterations;
    report.outer.push_back({base_cost(prob, traj), traj.max_violation,
                            res.al.mu, inner.iterations, rho});
    if (inner.diverged) {
      status = SolverStatus::kDiverged;
      break;
    }
    if (traj.max_violation < opt.tol_con) {
      status = SolverStatus::kConverged;
      break;
    }
    if (outer + 1 == opt.max_outer) break;
    res.al = constraints::update_multipliers(std::move(res.al),
                                             constraint_values(prob, traj));
    evaluate(prob, res.al, traj);
  }

  // Gains consistent with the returned trajectory, unregularized when the
  // expansion allows it.
  BackwardResult final_bp;
  double r = 0.0;
  while (!(final_bp = backward_pass(prob, traj, res.al, r)).ok) {
    r = std::max(r * opt.rho_increase, opt.rho_initial);
    if (r > opt.rho_max) {
      res.trajectory = std::move(traj);
      return finish(SolverStatus::kDiverged,
                    "final backward pass not positive definite");
    }
  }
  res.gains = std::move(final_bp.gains);
  res.trajectory = std::move(traj);
  switch (status) {
    case SolverStatus::kConverged:
      return finish(status, "constraints satisfied within tolerance");
    case SolverStatus::kDiverged:
      return finish(status, "regularization exceeded its cap");
    default:
      return finish(status, "outer iteration cap reached");
  }
}

}  // namespace magnav::ilqr

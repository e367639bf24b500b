#pragma once

#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include "magnav/ilqr.hpp"

namespace magnav::testing {

// x' = Ax + Bu with cost ½Σ(xᵀQx + uᵀRu) + ½x_NᵀQ_f x_N and optional
// |u_i| ≤ u_max rows.
struct LqProblem {
  MatX A, B, Q, R, Qf;
  int N = 20;
  double u_max = 0.0;  // 0: unconstrained

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index control_dim() const { return B.cols(); }
  int horizon() const { return N; }
  VecX dynamics(int, const VecX& x, const VecX& u) const { return A * x + B * u; }
  void linearize(int, const VecX&, const VecX&, MatX& fx, MatX& fu) const {
    fx = A;
    fu = B;
  }
  CostExpansion stage_cost(int, const VecX& x, const VecX& u, bool d) const {
    CostExpansion e;
    e.value = 0.5 * x.dot(Q * x) + 0.5 * u.dot(R * u);
    if (d) {
      e.lx = Q * x;
      e.lu = R * u;
      e.lxx = Q;
      e.luu = R;
      e.lux = MatX::Zero(B.cols(), A.rows());
    }
    return e;
  }
  CostExpansion terminal_cost(const VecX& x, bool d) const {
    CostExpansion e;
    e.value = 0.5 * x.dot(Qf * x);
    if (d) {
      e.lx = Qf * x;
      e.lxx = Qf;
    }
    return e;
  }
  ConstraintEval stage_constraints(int, const VecX&, const VecX& u, bool d) const {
    ConstraintEval c;
    const Eigen::Index m = u_max > 0.0 ? 2 * u.size() : 0;
    c.g.resize(m);
    c.kinds.assign(m, RowKind::kInequality);
    if (d) {
      c.gx = MatX::Zero(m, A.rows());
      c.gu = MatX::Zero(m, B.cols());
    }
    if (m > 0) {
      c.g << u.array() - u_max, -u.array() - u_max;
      if (d) {
        c.gu.topRows(u.size()).setIdentity();
        c.gu.bottomRows(u.size()) = -MatX::Identity(u.size(), u.size());
      }
    }
    return c;
  }
  ConstraintEval terminal_constraints(const VecX&, bool d) const {
    ConstraintEval c;
    c.g.resize(0);
    if (d) c.gx = MatX::Zero(0, A.rows());
    return c;
  }
};

static_assert(ilqr::Problem<LqProblem>);

inline LqProblem random_lq(unsigned seed, int nx = 13, int nu = 7) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  auto rnd = [&](int r, int c) {
    MatX m(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) m(i, j) = n(rng);
    }
    return m;
  };
  LqProblem p;
  MatX a = rnd(nx, nx);
  const Eigen::EigenSolver<MatX> es(a);
  p.A = 0.95 * a / es.eigenvalues().cwiseAbs().maxCoeff();  // spectral radius 0.95
  p.B = 0.3 * rnd(nx, nu);
  MatX lq = rnd(nx, nx), lr = rnd(nu, nu), lf = rnd(nx, nx);
  p.Q = lq * lq.transpose() / nx + 0.1 * MatX::Identity(nx, nx);
  p.R = lr * lr.transpose() / nu + 0.1 * MatX::Identity(nu, nu);
  p.Qf = lf * lf.transpose() / nx + MatX::Identity(nx, nx);
  return p;
}

struct Riccati {
  std::vector<MatX> K;
  MatX P0;
};

// Discrete-time finite-horizon Riccati recursion, u = Kx.
inline Riccati riccati(const LqProblem& p) {
  Riccati r;
  r.K.resize(p.N);
  MatX P = p.Qf;
  for (int k = p.N - 1; k >= 0; --k) {
    const MatX S = p.R + p.B.transpose() * P * p.B;
    const MatX K = -S.ldlt().solve(p.B.transpose() * P * p.A);
    P = p.Q + p.A.transpose() * P * p.A + p.A.transpose() * P * p.B * K;
    P = 0.5 * (P + P.transpose());
    r.K[k] = K;
  }
  r.P0 = P;
  return r;
}

inline VecX random_x0(unsigned seed, int nx) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  VecX x(nx);
  for (auto& v : x) v = n(rng);
  return x;
}

}  // namespace magnav::testing

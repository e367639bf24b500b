#include <gtest/gtest.h>

#include "magnav/ilqr.hpp"
#include "lq_problem.hpp"
#include "support.hpp"

using namespace magnav;
using namespace magnav::ilqr;
using namespace magnav::testing;


TEST(Ilqr, MatchesRiccatiOnLinearQuadratic) {
  for (unsigned seed : {1u, 2u, 3u}) {
    const auto p = random_lq(seed);
    const VecX x0 = random_x0(seed + 100, 13);
    const auto ric = riccati(p);
    const auto res = solve(p, x0, std::vector<VecX>(p.N, VecX::Zero(7)), 0.1);
    ASSERT_EQ(res.report.status, SolverStatus::kConverged);
    const double optimal = 0.5 * x0.dot(ric.P0 * x0);
    EXPECT_LT(magnav::testing::rel_err(res.trajectory.cost, optimal), 1e-6);
    for (int k = 0; k < p.N; ++k) {
      EXPECT_LT((res.gains.K[k] - ric.K[k]).norm() / ric.K[k].norm(), 1e-6) << "k=" << k;
      // Optimal inputs are the closed-loop Riccati policy.
      EXPECT_LT((res.trajectory.inputs[k] - ric.K[k] * res.trajectory.states[k]).norm(),
                1e-6 * std::max(1.0, res.trajectory.inputs[k].norm()));
    }
  }
}

TEST(Ilqr, BackwardPassFeedforwardVanishesAtOptimum) {
  const auto p = random_lq(7, 4, 2);
  const auto res = solve(p, random_x0(8, 4), std::vector<VecX>(p.N, VecX::Zero(2)), 0.1);
  const auto al = constraints::AlState::make(constraint_kinds(p, res.trajectory), {});
  const auto bp = backward_pass(p, res.trajectory, al, 0.0);
  ASSERT_TRUE(bp.ok);
  for (const auto& d : bp.gains.d) EXPECT_LT(d.norm(), 1e-9);
  EXPECT_LT(std::abs(bp.dv1), 1e-12);
}

TEST(Ilqr, ForwardPassStepZeroReproducesNominal) {
  const auto p = random_lq(9, 4, 2);
  const VecX x0 = random_x0(10, 4);
  auto traj = *rollout(p, x0, std::vector<VecX>(p.N, VecX::Ones(2)), 0.1);
  const auto al = constraints::AlState::make(constraint_kinds(p, traj), {});
  evaluate(p, al, traj);
  const auto bp = backward_pass(p, traj, al, 0.0);
  const auto same = forward_pass(p, traj, bp.gains, 0.0, al);
  ASSERT_TRUE(same.has_value());
  for (int k = 0; k <= p.N; ++k) EXPECT_EQ(same->states[k], traj.states[k]);
  EXPECT_THROW(forward_pass(p, traj, bp.gains, 1.5, al), ContractError);
  EXPECT_THROW(forward_pass(p, traj, bp.gains, -0.1, al), ContractError);
}

TEST(Ilqr, FullStepDecreasesCostByPredictedAmount) {
  const auto p = random_lq(11, 5, 3);
  const VecX x0 = random_x0(12, 5);
  auto traj = *rollout(p, x0, std::vector<VecX>(p.N, VecX::Zero(3)), 0.1);
  const auto al = constraints::AlState::make(constraint_kinds(p, traj), {});
  evaluate(p, al, traj);
  const auto bp = backward_pass(p, traj, al, 0.0);
  const auto next = forward_pass(p, traj, bp.gains, 1.0, al);
  // For an LQ problem the quadratic model is exact.
  EXPECT_NEAR(next->cost - traj.cost, bp.dv1 + bp.dv2, 1e-9 * traj.cost);
}

TEST(Ilqr, InputBoundsAreEnforced) {
  auto p = random_lq(13, 4, 2);
  p.u_max = 0.05;
  const VecX x0 = 5.0 * random_x0(14, 4);
  const auto res = solve(p, x0, std::vector<VecX>(p.N, VecX::Zero(2)), 0.1);
  ASSERT_EQ(res.report.status, SolverStatus::kConverged);
  double worst = 0.0;
  for (const auto& u : res.trajectory.inputs) worst = std::max(worst, u.cwiseAbs().maxCoeff());
  EXPECT_LE(worst, 0.05 + 1e-3);
  EXPECT_GT(worst, 0.04);  // the bound is active
  // Outer iterations raise μ geometrically.
  for (std::size_t i = 1; i < res.report.outer.size(); ++i) {
    EXPECT_DOUBLE_EQ(res.report.outer[i].mu, 10.0 * res.report.outer[i - 1].mu);
  }
}

TEST(Ilqr, InitialGuessLengthChecked) {
  const auto p = random_lq(15, 3, 1);
  EXPECT_THROW(solve(p, VecX::Zero(3), std::vector<VecX>(3, VecX::Zero(1)), 0.1),
               ContractError);
}

TEST(Ilqr, StatusNames) {
  EXPECT_EQ(to_string(SolverStatus::kConverged), "converged");
  EXPECT_EQ(to_string(SolverStatus::kMaxIterations), "max_iter");
  EXPECT_EQ(to_string(SolverStatus::kDiverged), "diverged");
  EXPECT_EQ(to_string(SolverStatus::kInfeasibleStart), "infeasible_start");
}

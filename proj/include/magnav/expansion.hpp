#pragma once

#include <vector>

#include "magnav/common.hpp"

namespace magnav {

/// Value and second-order expansion of a stage (or terminal) cost about
/// (x, u). Terminal expansions leave the u-blocks empty.
struct CostExpansion {
  double value = 0.0;
  VecX lx, lu;
  MatX lxx, luu, lux;  // lux is nu × nx

  static CostExpansion zero(Eigen::Index nx, Eigen::Index nu) {
    CostExpansion e;
    e.lx = VecX::Zero(nx);
    e.lu = VecX::Zero(nu);
    e.lxx = MatX::Zero(nx, nx);
    e.luu = MatX::Zero(nu, nu);
    e.lux = MatX::Zero(nu, nx);
    return e;
  }
};

enum class RowKind { kInequality, kEquality };

/// Stacked constraint rows with inequalities as g ≤ 0 and equalities as
/// h = 0, plus their Jacobians when requested.
struct ConstraintEval {
  VecX g;
  MatX gx, gu;
  std::vector<RowKind> kinds;

  Eigen::Index size() const { return g.size(); }
};

/// Largest violation: max(0, g) for inequality rows, |h| for equality rows.
inline double max_violation(const ConstraintEval& c) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < c.g.size(); ++i) {
    const double r = c.kinds[i] == RowKind::kEquality ? std::abs(c.g[i])
                                                      : std::max(0.0, c.g[i]);
    v = std::max(v, r);
  }
  return v;
}

}  // namespace magnav

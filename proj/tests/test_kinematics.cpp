#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include "magnav/kinematics.hpp"
#include "support.hpp"

using namespace magnav;
using namespace magnav::kinematics;

namespace {

// Independent DH composition from elementary rotations and translations.
Mat4 oracle_link(const DhRow& r, double q, DhConvention c) {
  using Eigen::AngleAxisd;
  using Eigen::Translation3d;
  const double th = q + r.theta_offset;
  Eigen::Affine3d t;
  if (c == DhConvention::kClassic) {
    t = AngleAxisd(th, Vec3::UnitZ()) * Translation3d(0, 0, r.d) *
        Translation3d(r.a, 0, 0) * AngleAxisd(r.alpha, Vec3::UnitX());
  } else {
    t = AngleAxisd(r.alpha, Vec3::UnitX()) * Translation3d(r.a, 0, 0) *
        AngleAxisd(th, Vec3::UnitZ()) * Translation3d(0, 0, r.d);
  }
  return t.matrix();
}

JointVec random_joints(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  JointVec q;
  for (auto& v : q) v = u(rng);
  return q;
}

Vec3 vee(const Mat3& s) { return Vec3(s(2, 1), s(0, 2), s(1, 0)); }

}  // namespace

TEST(Kinematics, PlanarTwoLinkClassic) {
  const double l1 = 0.4, l2 = 0.3;
  DhTable dh;
  dh.rows = {{l1, 0, 0, 0}, {l2, 0, 0, 0}};
  for (double q1 : {-1.0, 0.2, 2.5}) {
    for (double q2 : {-0.7, 0.0, 1.3}) {
      const VecX q = Eigen::Vector2d(q1, q2);
      const auto pose = forward_kinematics(dh, q);
      EXPECT_NEAR(pose.position.x(), l1 * std::cos(q1) + l2 * std::cos(q1 + q2), 1e-15);
      EXPECT_NEAR(pose.position.y(), l1 * std::sin(q1) + l2 * std::sin(q1 + q2), 1e-15);
      EXPECT_NEAR(pose.position.z(), 0.0, 1e-15);
      MatX expected = MatX::Zero(6, 2);
      expected(0, 0) = -l1 * std::sin(q1) - l2 * std::sin(q1 + q2);
      expected(0, 1) = -l2 * std::sin(q1 + q2);
      expected(1, 0) = l1 * std::cos(q1) + l2 * std::cos(q1 + q2);
      expected(1, 1) = l2 * std::cos(q1 + q2);
      expected(5, 0) = expected(5, 1) = 1.0;
      EXPECT_LT((geometric_jacobian(dh, q) - expected).cwiseAbs().maxCoeff(), 1e-15);
    }
  }
}

TEST(Kinematics, PlanarTwoLinkModifiedMatchesClassic) {
  DhTable classic, modified;
  classic.rows = {{0.4, 0, 0, 0}, {0.3, 0, 0, 0}};
  modified.convention = DhConvention::kModified;
  modified.rows = {{0, 0, 0, 0}, {0.4, 0, 0, 0}};
  modified.tool_transform(0, 3) = 0.3;
  const VecX q = Eigen::Vector2d(0.6, -1.1);
  EXPECT_LT((forward_kinematics(classic, q).position -
             forward_kinematics(modified, q).position).norm(), 1e-15);
  EXPECT_LT((geometric_jacobian(classic, q) - geometric_jacobian(modified, q))
                .cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Kinematics, ChainMatchesElementaryComposition) {
  std::mt19937_64 rng(21);
  for (auto conv : {DhConvention::kClassic, DhConvention::kModified}) {
    DhTable dh = panda_like_table();
    dh.convention = conv;
    dh.rows[2].theta_offset = 0.3;
    dh.tool_transform.topLeftCorner<3, 3>() =
        Eigen::AngleAxisd(0.4, Vec3(1, 2, 3).normalized()).toRotationMatrix();
    for (int s = 0; s < 50; ++s) {
      const JointVec q = random_joints(rng);
      Mat4 t = Mat4::Identity();
      for (int i = 0; i < 7; ++i) t = t * oracle_link(dh.rows[i], q[i], conv);
      t = t * dh.tool_transform;
      EXPECT_LT((forward_transform(dh, q) - t).cwiseAbs().maxCoeff(), 1e-14);
    }
  }
}

TEST(Kinematics, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(22);
  for (auto conv : {DhConvention::kClassic, DhConvention::kModified}) {
    DhTable dh = panda_like_table();
    dh.convention = conv;
    for (int s = 0; s < 30; ++s) {
      const JointVec q = random_joints(rng);
      const MatX jac = geometric_jacobian(dh, q);
      const Mat3 r0 = forward_kinematics(dh, q).rotation;
      for (int i = 0; i < 7; ++i) {
        const double h = 1e-6;
        JointVec qp = q, qm = q;
        qp[i] += h;
        qm[i] -= h;
        const auto pp = forward_kinematics(dh, qp), pm = forward_kinematics(dh, qm);
        const Vec3 lin = (pp.position - pm.position) / (2 * h);
        const Vec3 ang = vee((pp.rotation - pm.rotation) / (2 * h) * r0.transpose());
        EXPECT_LT((jac.block<3, 1>(0, i) - lin).norm(), 1e-8);
        EXPECT_LT((jac.block<3, 1>(3, i) - ang).norm(), 1e-8);
      }
    }
  }
}

TEST(Kinematics, LastJointSpinsEpmAboutItsAxis) {
  const DhTable dh = panda_like_table();
  JointVec q;
  q << 0.1, -0.5, 0.2, -2.0, 0.3, 1.6, 0.0;
  const auto a = forward_kinematics(dh, q);
  q[6] = 1.9;
  const auto b = forward_kinematics(dh, q);
  EXPECT_LT((a.position - b.position).norm(), 1e-15);
  EXPECT_LT((a.rotation.col(2) - b.rotation.col(2)).norm(), 1e-15);
  EXPECT_LT((geometric_jacobian(dh, q).block<3, 1>(0, 6).norm()), 1e-15);
}

TEST(Kinematics, ConditionNumber) {
  EXPECT_DOUBLE_EQ(condition_number(MatX::Identity(6, 7)), 1.0);
  MatX d = MatX::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 0.5;
  EXPECT_NEAR(condition_number(d), 8.0, 1e-14);
  d(1, 1) = 0.0;
  EXPECT_EQ(condition_number(d, 42.0), 42.0);
  MatX bad = MatX::Zero(2, 2);
  bad(0, 0) = NAN;
  EXPECT_THROW(condition_number(bad), ContractError);
}

TEST(Kinematics, HomePoseIsWellConditioned) {
  const DhTable dh = panda_like_table();
  JointVec q;
  q << 0, -0.785398, 0, -2.356194, 0, 1.570796, 0.785398;
  const double k = condition_number(geometric_jacobian(dh, q));
  EXPECT_GE(k, 1.0);
  EXPECT_LT(k, 1e3);
}

TEST(Kinematics, ReachBoundDominatesJacobianColumns) {
  std::mt19937_64 rng(23);
  const DhTable dh = panda_like_table();
  const double bound = reach_bound(dh);
  for (int s = 0; s < 100; ++s) {
    const MatX jac = geometric_jacobian(dh, random_joints(rng));
    for (int i = 0; i < 7; ++i) EXPECT_LE((jac.block<3, 1>(0, i).norm()), bound);
  }
}

TEST(Kinematics, Contracts) {
  const DhTable dh = panda_like_table();
  EXPECT_THROW(forward_kinematics(dh, VecX::Zero(6)), ContractError);
  EXPECT_THROW(geometric_jacobian(dh, VecX::Zero(8)), ContractError);
  DhTable skew = dh;
  skew.tool_transform(0, 1) = 0.5;
  EXPECT_THROW(skew.validate(), ContractError);
  EXPECT_NO_THROW(dh.validate());
}

#include "nhidapbc/models.hpp"

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

namespace nhidapbc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const PcdCheck& find_check(const PcdReport& report, const std::string& name) {
  for (const auto& c : report.checks)
    if (c.name == name) return c;
  throw std::runtime_error("missing check " + name);
}

class PcdOnUnicycles : public ::testing::TestWithParam<bool> {
 protected:
  NonholonomicModel<double> build() const {
    return GetParam() ? build_diff_drive<double>(1.2, 0.3) : build_knife_edge<double>(1.2, 0.3);
  }
};

TEST_P(PcdOnUnicycles, AllAssumptionsHold) {
  const auto robot = build();
  const PcdReport report = validate_pcd(robot.model, &robot.pcd);
  ASSERT_TRUE(report.applicable);
  EXPECT_TRUE(report.passed());
  ASSERT_EQ(report.checks.size(), 5u);
  for (const auto& c : report.checks) EXPECT_LE(c.max_residual, 1e-10) << c.name;
}

TEST_P(PcdOnUnicycles, DistributionIsOrthogonalToConstraint) {
  const auto robot = build();
  std::mt19937_64 rng(21);
  for (int i = 0; i < 200; ++i) {
    const VectorXd r = oracle::uniform(rng, 1, -M_PI, M_PI);
    EXPECT_LT((robot.pcd.d_s(r).transpose() * robot.pcd.a_s(r)).norm(), 1e-15);
    EXPECT_NEAR(robot.pcd.d_s(r).norm(), 1.0, 1e-15);
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, PcdOnUnicycles, ::testing::Values(true, false),
                         [](const auto& info) { return info.param ? "DiffDrive" : "KnifeEdge"; });

TEST(PcdMutation, InertiaDependingOnSFailsAssumptionThree) {
  auto robot = build_diff_drive<double>(1.0, 0.1);
  robot.model.mass = [](const VectorXd& q) {
    MatrixXd M = MatrixXd::Zero(3, 3);
    M.diagonal() << 1.0 + 0.1 * q(0) * q(0), 1.0, 0.1;
    return M;
  };
  const auto report = validate_pcd(robot.model, &robot.pcd);
  EXPECT_FALSE(report.passed());
  EXPECT_FALSE(find_check(report, kAssumptionMassOnR).pass);
  EXPECT_TRUE(find_check(report, kAssumptionConstraintOnS).pass);
}

TEST(PcdMutation, InertialCouplingFailsAssumptionFour) {
  auto robot = build_diff_drive<double>(1.0, 0.1);
  robot.model.mass = [](const VectorXd&) {
    MatrixXd M = MatrixXd::Zero(3, 3);
    M.diagonal() << 1.0, 1.0, 0.5;
    M(0, 2) = M(2, 0) = 0.2;
    return M;
  };
  const auto report = validate_pcd(robot.model, &robot.pcd);
  EXPECT_FALSE(find_check(report, kAssumptionNoCoupling).pass);
  EXPECT_TRUE(find_check(report, kAssumptionMassOnR).pass);
}

TEST(PcdMutation, ConstraintActingOnRFailsAssumptionTwo) {
  auto robot = build_diff_drive<double>(1.0, 0.1);
  robot.model.constraint = [](const VectorXd& q) {
    MatrixXd A(3, 1);
    A << std::sin(q(2)), -std::cos(q(2)), 0.3;
    return A;
  };
  const auto report = validate_pcd(robot.model, &robot.pcd);
  EXPECT_FALSE(find_check(report, kAssumptionConstraintOnS).pass);
  EXPECT_FALSE(find_check(report, kAnnihilatorCheck).pass);
}

TEST(PcdMutation, OverlappingIndicesFailAssumptionOne) {
  auto robot = build_diff_drive<double>(1.0, 0.1);
  robot.pcd.r_index = {1};
  const auto report = validate_pcd(robot.model, &robot.pcd);
  ASSERT_EQ(report.checks.size(), 1u);
  EXPECT_EQ(report.checks[0].name, kAssumptionProductStructure);
  EXPECT_FALSE(report.passed());
}

TEST(PcdMutation, MissingDecomposition) {
  const auto robot = build_diff_drive<double>(1.0, 0.1);
  const auto report = validate_pcd<double>(robot.model, nullptr);
  EXPECT_FALSE(report.applicable);
  EXPECT_FALSE(report.passed());
}

TEST(Pcd, HolonomicArmIsNotApplicable) {
  const auto arm = build_arm3dof<double>({});
  const auto report = validate_pcd<double>(arm.model, nullptr);
  EXPECT_FALSE(report.applicable);
  EXPECT_EQ(report.note, "not applicable, k=0");
  EXPECT_TRUE(report.checks.empty());
}

TEST(Pcd, SplitAndJoinRoundTrip) {
  const auto robot = build_diff_drive<double>(1.0, 0.1);
  VectorXd q(3);
  q << 1.5, -2.5, 0.75;
  EXPECT_EQ(robot.pcd.s_of(q), q.head(2));
  EXPECT_EQ(robot.pcd.r_of(q)(0), 0.75);
  EXPECT_EQ(robot.pcd.join(robot.pcd.s_of(q), robot.pcd.r_of(q)), q);
}

TEST(Pcd, ConstraintJacobianMatchesFiniteDifferences) {
  const auto robot = build_diff_drive<double>(1.0, 0.1);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const VectorXd r = oracle::uniform(rng, 1, -M_PI, M_PI);
    const MatrixXd fd = oracle::central_jacobian([&](const VectorXd& x) { return VectorXd(robot.pcd.a_s(x)); }, r);
    EXPECT_LT((robot.pcd.a_s_derivatives(r)[0] - fd).norm(), 1e-9);
  }
}

TEST(Arm, ForwardKinematicsAtZeroPose) {
  const auto arm = build_arm3dof<double>({});
  const Eigen::Vector3d tip = arm.fk(VectorXd::Zero(3));
  EXPECT_NEAR(tip.x(), 0.7, 1e-15);
  EXPECT_NEAR(tip.y(), 0.0, 1e-15);
  EXPECT_NEAR(tip.z(), 0.5, 1e-15);
}

TEST(Arm, ForwardKinematicsMatchesChainOracle) {
  Arm3DofParams params;
  params.link_lengths = {0.6, 0.45, 0.35};
  params.base = {1.0, -2.0, 0.1};
  const auto arm = build_arm3dof<double>(params);
  const oracle::ArmKinematics ref{1, 1, 1, 0.6, 0.45, 0.35, 9.81};
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    const VectorXd q = oracle::uniform(rng, 3, -M_PI, M_PI);
    EXPECT_LT((arm.fk(q) - (ref.tip(q) + Eigen::Vector3d(1.0, -2.0, 0.1))).norm(), 1e-14);
    const MatrixXd fd = oracle::central_jacobian([&](const VectorXd& x) { return VectorXd(arm.fk(x)); }, q);
    EXPECT_LT((MatrixXd(arm.fk_jac(q)) - fd).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Arm, MassMatrixMatchesKineticEnergyOracle) {
  Arm3DofParams params;
  params.link_masses = {1.5, 2.0, 0.7};
  params.link_lengths = {0.5, 0.4, 0.3};
  const auto arm = build_arm3dof<double>(params);
  const oracle::ArmKinematics ref{1.5, 2.0, 0.7, 0.5, 0.4, 0.3, 9.81};
  std::mt19937_64 rng(12);
  for (int i = 0; i < 200; ++i) {
    const VectorXd q = oracle::uniform(rng, 3, -M_PI, M_PI);
    const MatrixXd M = arm.model.mass(q);
    EXPECT_LT((M - ref.mass(q)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_TRUE(M.isApprox(M.transpose(), 0.0));
    EXPECT_EQ(Eigen::LLT<MatrixXd>(M).info(), Eigen::Success);
    EXPECT_NEAR(arm.model.potential(q), ref.potential(q), 1e-12);
  }
}

TEST(Arm, AnalyticDerivativesMatchFiniteDifferences) {
  const auto arm = build_arm3dof<double>({});
  std::mt19937_64 rng(13);
  for (int i = 0; i < 200; ++i) {
    const VectorXd q = oracle::uniform(rng, 3, -M_PI, M_PI);
    const auto dM = arm.model.mass_jac(q);
    const auto fd = finite_difference_derivatives<double>(arm.model.mass, q);
    for (std::size_t b = 0; b < 3; ++b) EXPECT_LT((dM[b] - fd[b]).cwiseAbs().maxCoeff(), 1e-8);
    const VectorXd g = oracle::central_gradient(arm.model.potential, q);
    EXPECT_LT(oracle::relative_error(arm.model.potential_grad(q), g), 1e-6);
  }
}

TEST(Arm, IsFullyActuatedAndUnconstrained) {
  const auto arm = build_arm3dof<double>({});
  EXPECT_EQ(arm.model.n, 3);
  EXPECT_EQ(arm.model.k, 0);
  EXPECT_EQ(arm.model.m, 3);
  EXPECT_EQ(arm.model.annihilator(VectorXd::Zero(3)), MatrixXd::Identity(3, 3));
}

TEST(Builders, RejectNonPositiveParameters) {
  EXPECT_THROW(build_diff_drive<double>(0.0, 0.1), std::invalid_argument);
  EXPECT_THROW(build_knife_edge<double>(1.0, -1.0), std::invalid_argument);
  Arm3DofParams params;
  params.link_lengths[1] = 0.0;
  EXPECT_THROW(build_arm3dof<double>(params), std::invalid_argument);
}

TEST(Names, AgentKinds) {
  EXPECT_EQ(to_string(AgentKind::DiffDrive), "diff_drive");
  EXPECT_EQ(to_string(AgentKind::KnifeEdge), "knife_edge");
  EXPECT_EQ(to_string(AgentKind::Arm3Dof), "arm3dof");
}

}  // namespace
}  // namespace nhidapbc

#include "nhidapbc/idapbc.hpp"
#include "nhidapbc/models.hpp"
#include "nhidapbc/pcdpot.hpp"

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

namespace nhidapbc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

ControllerConfig<double> unicycle_config() {
  ControllerConfig<double> cfg;
  cfg.k_v = MatrixXd::Identity(2, 2);
  cfg.q_s = MatrixXd::Identity(2, 2);
  cfg.q_r = MatrixXd::Identity(1, 1);
  cfg.q_r_goal = MatrixXd::Identity(1, 1);
  return cfg;
}

ControllerConfig<double> arm_config() {
  ControllerConfig<double> cfg;
  cfg.k_v = MatrixXd::Identity(3, 3);
  cfg.q_s = MatrixXd::Identity(3, 3);
  return cfg;
}

MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index n) {
  MatrixXd B(n, n);
  for (Eigen::Index i = 0; i < n; ++i) B.col(i) = oracle::uniform(rng, n, -1, 1);
  return B * B.transpose() + 0.5 * MatrixXd::Identity(n, n);
}

TEST(ControlLaw, RestingUnicycleFacingAlongX) {
  // q = (1, 1, 0), goal (4, 4): dV_d/dq = (-3, -3, -9) and p~ = 0, so
  // tau = -S^T dV_d/dq.
  const auto robot = build_diff_drive<double>(1.0, 0.1);
  const auto cfg = unicycle_config();
  VectorXd q(3), grad(3);
  q << 1, 1, 0;
  grad << -3, -3, -9;
  const VectorXd tau = control_law(robot.model, cfg, ReducedState<double>{q, VectorXd::Zero(2)}, grad);
  EXPECT_NEAR(tau(0), 3.0, 1e-14);
  EXPECT_NEAR(tau(1), 9.0, 1e-14);
}

struct MatchingCase {
  const char* name;
  bool arm;
  DesiredMassPolicy mass;
  GyroscopicPolicy j;
};

class Matching : public ::testing::TestWithParam<MatchingCase> {};

TEST_P(Matching, OpenLoopUnderControlEqualsTargetClosedLoop) {
  const auto& param = GetParam();
  std::mt19937_64 rng(31);
  MechanicalModel<double> model =
      param.arm ? build_arm3dof<double>({}).model : build_diff_drive<double>(1.3, 0.2).model;
  ControllerConfig<double> cfg = param.arm ? arm_config() : unicycle_config();
  cfg.mass_policy = param.mass;
  cfg.j_policy = param.j;
  cfg.m_d = random_spd(rng, model.reduced_dim());
  cfg.k_v = random_spd(rng, model.m);

  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const ReducedState<double> x{oracle::uniform(rng, model.n, -3, 3), oracle::uniform(rng, model.reduced_dim(), -2, 2)};
    const VectorXd grad = oracle::uniform(rng, model.n, -5, 5);
    const VectorXd tau = control_law(model, cfg, x, grad);
    const auto open = reduced_rhs(model, x, tau);
    const auto target = closed_loop_rhs(model, cfg, x, grad);
    worst = std::max({worst, (open.q_dot - target.q_dot).cwiseAbs().maxCoeff(),
                      (open.p_tilde_dot - target.p_tilde_dot).cwiseAbs().maxCoeff()});
  }
  EXPECT_LE(worst, 1e-10);
}

INSTANTIATE_TEST_SUITE_P(
    Policies, Matching,
    ::testing::Values(MatchingCase{"DiffDriveOpenLoopMass", false, DesiredMassPolicy::MatchOpenLoop, GyroscopicPolicy::MatchOpenLoop},
                      MatchingCase{"DiffDriveConstantMass", false, DesiredMassPolicy::Constant, GyroscopicPolicy::Zero},
                      MatchingCase{"ArmOpenLoopMass", true, DesiredMassPolicy::MatchOpenLoop, GyroscopicPolicy::MatchOpenLoop},
                      MatchingCase{"ArmConstantMass", true, DesiredMassPolicy::Constant, GyroscopicPolicy::Zero}),
    [](const auto& info) { return std::string(info.param.name); });

// dHd/dt along the closed loop, by central differences of Hd(x + h xdot).
template <typename Hd, typename Rates>
double energy_rate(const Hd& hd, const Rates& rates, const ReducedState<double>& x, double h = 1e-6) {
  const auto r = rates(x);
  const ReducedState<double> plus{x.q + h * r.q_dot, x.p_tilde + h * r.p_tilde_dot};
  const ReducedState<double> minus{x.q - h * r.q_dot, x.p_tilde - h * r.p_tilde_dot};
  return (hd(plus) - hd(minus)) / (2 * h);
}

TEST(Lyapunov, HolonomicArmDissipatesAtTheDampingRate) {
  const auto arm = build_arm3dof<double>({});
  std::mt19937_64 rng(41);
  auto cfg = arm_config();
  cfg.mass_policy = DesiredMassPolicy::Constant;
  cfg.m_d = random_spd(rng, 3);
  GoalSpec<double> goal;
  goal.s_star = VectorXd::Constant(3, 0.3);
  auto hd = [&](const ReducedState<double>& x) {
    return desired_hamiltonian(arm.model, cfg, x, evaluate_holonomic_potential(cfg, x.q, goal).value);
  };
  auto rates = [&](const ReducedState<double>& x) {
    return closed_loop_rhs(arm.model, cfg, x, evaluate_holonomic_potential(cfg, x.q, goal).grad);
  };
  for (int i = 0; i < 200; ++i) {
    const ReducedState<double> x{oracle::uniform(rng, 3, -2, 2), oracle::uniform(rng, 3, -1, 1)};
    const double rate = dissipation_rate(arm.model, cfg, x);
    EXPECT_GE(rate, 0.0);
    EXPECT_NEAR(energy_rate(hd, rates, x), -rate, 1e-6 * std::max(1.0, rate));
  }
}

class BranchEnergy : public ::testing::TestWithParam<Branch> {};

// The first-branch gradient drops the s-dependence of V_dr. The dropped term
// is A_s Q_r v_omega, orthogonal to every admissible s-velocity when Q_s is a
// multiple of the identity, so Hd still decreases at exactly the damping rate.
TEST_P(BranchEnergy, UnicycleHdIsAStrictLyapunovFunction) {
  const auto robot = build_diff_drive<double>(1.0, 0.1);
  auto cfg = unicycle_config();
  cfg.q_s *= 2.5;
  cfg.q_r *= 7.0;
  GoalSpec<double> goal;
  goal.s_star = VectorXd::Constant(2, 1.0);
  goal.r_star = VectorXd::Constant(1, 0.4);
  const PotentialMode mode{GetParam(), std::nullopt};
  auto hd = [&](const ReducedState<double>& x) {
    return desired_hamiltonian(robot.model, cfg, x, evaluate_desired_potential(robot.pcd, cfg, mode, x.q, goal).value);
  };
  auto rates = [&](const ReducedState<double>& x) {
    return closed_loop_rhs(robot.model, cfg, x, evaluate_desired_potential(robot.pcd, cfg, mode, x.q, goal).grad);
  };
  std::mt19937_64 rng(43);
  for (int i = 0; i < 200; ++i) {
    const ReducedState<double> x{oracle::uniform(rng, 3, -3, 3), oracle::uniform(rng, 2, -1, 1)};
    const double rate = dissipation_rate(robot.model, cfg, x);
    EXPECT_NEAR(energy_rate(hd, rates, x), -rate, 1e-6 * std::max(1.0, rate));
  }
}

INSTANTIATE_TEST_SUITE_P(Branches, BranchEnergy,
                         ::testing::Values(Branch::ConstrainedStabilization, Branch::UnconstrainedStabilization));

TEST(Policies, DesiredMassAndGyroscopicAssignment) {
  const auto robot = build_diff_drive<double>(2.0, 0.5);
  auto cfg = unicycle_config();
  VectorXd q(3), p(2);
  q << 0.1, 0.2, 0.3;
  p << 1.0, -1.0;
  EXPECT_TRUE(desired_mass(robot.model, cfg, q).isApprox(reduced_mass(robot.model, q)));
  cfg.mass_policy = DesiredMassPolicy::Constant;
  cfg.m_d = MatrixXd::Identity(3, 3);
  EXPECT_THROW(desired_mass(robot.model, cfg, q), DimensionError);
  cfg.m_d = 4.0 * MatrixXd::Identity(2, 2);
  EXPECT_EQ(desired_mass(robot.model, cfg, q), cfg.m_d);
  cfg.j_policy = GyroscopicPolicy::Zero;
  EXPECT_EQ(gyroscopic_assignment(robot.model, cfg, q, p), MatrixXd::Zero(2, 2));
}

TEST(Matching, LeftAnnihilator) {
  MatrixXd F(2, 1);
  F << 1, 1;
  const MatrixXd perp = left_annihilator<double>(F);
  ASSERT_EQ(perp.rows(), 1);
  EXPECT_NEAR((perp * F).norm(), 0.0, 1e-15);
  EXPECT_NEAR(perp(0, 0), -perp(0, 1), 1e-15);
  EXPECT_EQ(left_annihilator<double>(MatrixXd::Identity(2, 2)).rows(), 0);
}

TEST(Matching, FullyActuatedPlantsHaveNoConditions) {
  const auto robot = build_diff_drive<double>(1.0, 0.1);
  VectorXd q(3), grad(3);
  q << 0, 0, 1;
  grad << 1, 2, 3;
  const auto res = matching_residuals(robot.model, unicycle_config(), ReducedState<double>{q, VectorXd::Ones(2)}, grad);
  EXPECT_EQ(res.kinetic.size(), 0);
  EXPECT_EQ(res.potential.size(), 0);
}

TEST(Matching, UnderactuatedPotentialConditionSeesUnactuatedForce) {
  // Arm with the last joint passive. With M_d = M the potential condition
  // reduces to e3^T (dV/dq - dV_d/dq).
  auto model = build_arm3dof<double>({}).model;
  model.m = 2;
  model.input_map = [](const VectorXd&) {
    MatrixXd F = MatrixXd::Zero(3, 2);
    F(0, 0) = F(1, 1) = 1.0;
    return F;
  };
  auto cfg = arm_config();
  cfg.k_v = MatrixXd::Identity(2, 2);
  VectorXd q(3);
  q << 0.3, -0.4, 0.9;
  const ReducedState<double> x{q, VectorXd::Zero(3)};
  const VectorXd dV = model.potential_grad(q);

  VectorXd matched = dV;
  matched(0) += 1.0;
  matched(1) -= 2.0;
  auto res = matching_residuals(model, cfg, x, matched);
  ASSERT_EQ(res.potential.size(), 1);
  EXPECT_NEAR(res.potential(0), 0.0, 1e-12);
  EXPECT_NEAR(res.kinetic(0), 0.0, 1e-12);

  VectorXd mismatched = dV;
  mismatched(2) += 1.0;
  res = matching_residuals(model, cfg, x, mismatched);
  EXPECT_NEAR(std::abs(res.potential(0)), 1.0, 1e-12);
}

TEST(ControlLaw, RankLossIsAModelError) {
  auto model = build_diff_drive<double>(1.0, 0.1).model;
  model.input_map = [](const VectorXd&) { return MatrixXd(MatrixXd::Zero(3, 2)); };
  VectorXd q = VectorXd::Zero(3);
  EXPECT_THROW(control_law(model, unicycle_config(), ReducedState<double>{q, VectorXd::Zero(2)}, q), ModelError);
}

TEST(ControlLaw, WrongDampingShapeIsRejected) {
  const auto robot = build_diff_drive<double>(1.0, 0.1);
  auto cfg = unicycle_config();
  cfg.k_v = MatrixXd::Identity(3, 3);
  const VectorXd q = VectorXd::Zero(3);
  EXPECT_THROW(control_law(robot.model, cfg, ReducedState<double>{q, VectorXd::Zero(2)}, q), DimensionError);
}

}  // namespace
}  // namespace nhidapbc

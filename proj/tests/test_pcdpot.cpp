#include "nhidapbc/pcdpot.hpp"

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

namespace nhidapbc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

ControllerConfig<double> config(double qs = 1.0, double qr = 1.0) {
  ControllerConfig<double> cfg;
  cfg.k_v = MatrixXd::Identity(2, 2);
  cfg.q_s = qs * MatrixXd::Identity(2, 2);
  cfg.q_r = qr * MatrixXd::Identity(1, 1);
  cfg.q_r_goal = MatrixXd::Identity(1, 1);
  return cfg;
}

VectorXd vec2(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}

const std::optional<VectorXd> kFree;

VectorXd scalar(double a) { return VectorXd::Constant(1, a); }

TEST(Projections, AlongAndAcrossTheDrivingDirection) {
  const auto pcd = build_diff_drive<double>(1.0, 0.1).pcd;
  const auto cfg = config();
  const VectorXd g = grad_V_ds(cfg.q_s, vec2(1, 1), std::optional<VectorXd>(vec2(4, 4)));
  EXPECT_NEAR(v_alpha(pcd, scalar(M_PI / 4), g)(0), -3.0 * std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(v_omega(pcd, scalar(0.0), g)(0), 3.0, 1e-15);
  EXPECT_NEAR(grad_V_dr(pcd, cfg, Branch::ConstrainedStabilization, scalar(0.0), g, kFree)(0), -9.0, 1e-14);
}

TEST(Projections, SplitTheGoalForceCompletely) {
  // D_s and A_s are orthonormal in the plane, so v_alpha^2 + v_omega^2 = |dV_ds/ds|^2.
  const auto pcd = build_diff_drive<double>(1.0, 0.1).pcd;
  std::mt19937_64 rng(51);
  for (int i = 0; i < 200; ++i) {
    const VectorXd g = oracle::uniform(rng, 2, -5, 5);
    const VectorXd r = oracle::uniform(rng, 1, -M_PI, M_PI);
    const double a = v_alpha(pcd, r, g)(0), w = v_omega(pcd, r, g)(0);
    EXPECT_NEAR(a * a + w * w, g.squaredNorm(), 1e-12);
  }
}

TEST(Gradients, ConstrainedPotential) {
  std::mt19937_64 rng(52);
  for (int i = 0; i < 1000; ++i) {
    MatrixXd B(2, 2);
    B << oracle::uniform(rng, 2, -1, 1), oracle::uniform(rng, 2, -1, 1);
    const MatrixXd Q = B * B.transpose() + 0.1 * MatrixXd::Identity(2, 2);
    const std::optional<VectorXd> goal = oracle::uniform(rng, 2, -5, 5);
    const VectorXd s = oracle::uniform(rng, 2, -5, 5);
    const VectorXd fd = oracle::central_gradient([&](const VectorXd& x) { return V_ds<double>(Q, x, goal); }, s);
    EXPECT_LT(oracle::relative_error(grad_V_ds<double>(Q, s, goal), fd), 1e-6);
  }
}

TEST(Gradients, FirstBranchInR) {
  const auto pcd = build_diff_drive<double>(1.0, 0.1).pcd;
  std::mt19937_64 rng(53);
  for (int i = 0; i < 1000; ++i) {
    const auto cfg = config(1.0, oracle::uniform(rng, 1, 0.1, 10)(0));
    const VectorXd g = oracle::uniform(rng, 2, -5, 5);
    const VectorXd r = oracle::uniform(rng, 1, -M_PI, M_PI);
    auto value = [&](const VectorXd& x) {
      return V_dr(pcd, cfg, Branch::ConstrainedStabilization, x, g, kFree);
    };
    const VectorXd fd = oracle::central_gradient(value, r);
    EXPECT_LT(oracle::relative_error(grad_V_dr(pcd, cfg, Branch::ConstrainedStabilization, r, g, kFree), fd),
              1e-6);
  }
}

TEST(Gradients, SecondBranchInR) {
  const auto pcd = build_diff_drive<double>(1.0, 0.1).pcd;
  auto cfg = config();
  cfg.q_r_goal = 3.0 * MatrixXd::Identity(1, 1);
  std::mt19937_64 rng(54);
  for (int i = 0; i < 1000; ++i) {
    const std::optional<VectorXd> r_star = oracle::uniform(rng, 1, -M_PI, M_PI);
    const VectorXd r = oracle::uniform(rng, 1, -M_PI, M_PI);
    const VectorXd g = oracle::uniform(rng, 2, -5, 5);
    auto value = [&](const VectorXd& x) { return V_dr(pcd, cfg, Branch::UnconstrainedStabilization, x, g, r_star); };
    const VectorXd fd = oracle::central_gradient(value, r);
    const VectorXd grad = grad_V_dr(pcd, cfg, Branch::UnconstrainedStabilization, r, g, r_star);
    EXPECT_LT(oracle::relative_error(grad, fd), 1e-6);
    EXPECT_NEAR(grad(0), 3.0 * (r(0) - (*r_star)(0)), 1e-12);
  }
}

TEST(SecondBranch, FreeHeadingHasNoPotential) {
  const auto pcd = build_diff_drive<double>(1.0, 0.1).pcd;
  const auto cfg = config();
  const VectorXd g = vec2(1, 2);
  EXPECT_EQ(V_dr(pcd, cfg, Branch::UnconstrainedStabilization, scalar(1.0), g, kFree), 0.0);
  EXPECT_EQ(grad_V_dr(pcd, cfg, Branch::UnconstrainedStabilization, scalar(1.0), g, kFree)(0), 0.0);
}

TEST(FirstBranch, AblationRemovesTheRForcing) {
  const auto pcd = build_diff_drive<double>(1.0, 0.1).pcd;
  auto cfg = config();
  cfg.r_forcing = false;
  const VectorXd g = vec2(-3, -3);
  EXPECT_EQ(V_dr(pcd, cfg, Branch::ConstrainedStabilization, scalar(0.0), g, kFree), 0.0);
  EXPECT_EQ(grad_V_dr(pcd, cfg, Branch::ConstrainedStabilization, scalar(0.0), g, kFree)(0), 0.0);
}

TEST(Assembly, BlocksLandAtTheirCoordinates) {
  const auto pcd = build_diff_drive<double>(1.0, 0.1).pcd;
  const auto cfg = config();
  GoalSpec<double> goal;
  goal.s_star = vec2(4, 4);
  VectorXd q(3);
  q << 1, 1, 0;
  const auto v = evaluate_desired_potential(pcd, cfg, PotentialMode{}, q, goal);
  EXPECT_NEAR(v.grad(0), -3.0, 1e-15);
  EXPECT_NEAR(v.grad(1), -3.0, 1e-15);
  EXPECT_NEAR(v.grad(2), -9.0, 1e-14);
  EXPECT_NEAR(v.value, 9.0 + 4.5, 1e-14);
  EXPECT_EQ(v.value, v.goal_value);

  ExternalField<double> field{2.0, vec2(0.5, -0.5)};
  const auto w = evaluate_desired_potential(pcd, cfg, PotentialMode{}, q, goal, &field);
  EXPECT_NEAR(w.grad(0), -2.5, 1e-15);
  EXPECT_NEAR(w.grad(1), -3.5, 1e-15);
  EXPECT_NEAR(w.value - w.goal_value, 2.0, 1e-14);
  EXPECT_EQ(assemble_grad_Vd(pcd, cfg, PotentialMode{}, q, goal, &field), w.grad);
}

TEST(Switch, LatchesOnlyWhenBothThresholdsHold) {
  const auto cfg = config();
  const std::optional<VectorXd> goal = vec2(0, 0);
  const PotentialMode first;
  EXPECT_EQ(switch_supervisor(first, vec2(0.02, 0), goal, vec2(0, 0), cfg).branch, Branch::ConstrainedStabilization);
  EXPECT_EQ(switch_supervisor(first, vec2(0.005, 0), goal, vec2(0.02, 0), cfg).branch,
            Branch::ConstrainedStabilization);
  const auto second = switch_supervisor(first, vec2(0.005, 0), goal, vec2(0.005, 0), cfg, 3.5);
  EXPECT_EQ(second.branch, Branch::UnconstrainedStabilization);
  ASSERT_TRUE(second.switch_time.has_value());
  EXPECT_EQ(*second.switch_time, 3.5);
  // Latched: leaving the ball does not switch back.
  const auto later = switch_supervisor(second, vec2(5, 5), goal, vec2(1, 1), cfg, 9.0);
  EXPECT_EQ(later.branch, Branch::UnconstrainedStabilization);
  EXPECT_EQ(*later.switch_time, 3.5);
}

TEST(Switch, NoGoalNeverSwitches) {
  const auto cfg = config();
  const auto mode = switch_supervisor(PotentialMode{}, vec2(0, 0), kFree, vec2(0, 0), cfg);
  EXPECT_EQ(mode.branch, Branch::ConstrainedStabilization);
}

TEST(Repulsion, ValueInsideAndOutsideInfluence) {
  VectorXd a = VectorXd::Zero(3), b(3), far(3);
  b << 0.5, 0, 0;
  far << 1.5, 0, 0;
  std::vector<VectorXd> others{b};
  auto f = apf_repulsive<double>(a, others, 1.0, 1.0);
  EXPECT_NEAR(f.energy, 0.5, 1e-15);
  // dU/drho = -eta (1/rho - 1/rho0) / rho^2 = -4; the force -grad points away from b.
  EXPECT_NEAR(f.grad(0), 4.0, 1e-14);
  others = {far};
  f = apf_repulsive<double>(a, others, 1.0, 1.0);
  EXPECT_EQ(f.energy, 0.0);
  EXPECT_EQ(f.grad.norm(), 0.0);
}

TEST(Repulsion, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(55);
  int inside = 0;
  for (int i = 0; i < 1000; ++i) {
    const VectorXd x = oracle::uniform(rng, 3, -1, 1);
    std::vector<VectorXd> others{oracle::uniform(rng, 3, -1, 1), oracle::uniform(rng, 3, -1, 1)};
    bool near_edge = false;
    for (const auto& o : others) {
      const double rho = (x - o).norm();
      near_edge = near_edge || std::abs(rho - 1.5) < 1e-4 || rho < 0.05;
      inside += rho < 1.5;
    }
    if (near_edge) continue;  // kink at rho0, blow-up near contact
    auto energy = [&](const VectorXd& y) { return apf_repulsive<double>(y, others, 2.0, 1.5).energy; };
    const VectorXd fd = oracle::central_gradient(energy, x);
    EXPECT_LT(oracle::relative_error(apf_repulsive<double>(x, others, 2.0, 1.5).grad, fd), 1e-6);
  }
  EXPECT_GT(inside, 500);
}

TEST(Repulsion, ContactAndBadParameters) {
  const VectorXd a = VectorXd::Zero(3);
  std::vector<VectorXd> same{a};
  EXPECT_THROW(apf_repulsive<double>(a, same, 1.0, 1.0), CollisionError);
  EXPECT_THROW(apf_repulsive<double>(a, {}, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(apf_repulsive<double>(a, {}, 1.0, -1.0), std::invalid_argument);
}

TEST(Holonomic, QuadraticGoalWithExternalField) {
  ControllerConfig<double> cfg;
  cfg.q_s = 2.0 * MatrixXd::Identity(3, 3);
  GoalSpec<double> goal;
  goal.s_star = VectorXd::Ones(3);
  ExternalField<double> field{1.0, VectorXd::Constant(3, 0.25)};
  const auto v = evaluate_holonomic_potential(cfg, VectorXd(VectorXd::Zero(3)), goal, &field);
  EXPECT_NEAR(v.goal_value, 3.0, 1e-15);
  EXPECT_NEAR(v.value, 4.0, 1e-15);
  EXPECT_TRUE(v.grad.isApprox(VectorXd::Constant(3, -1.75)));
}

}  // namespace
}  // namespace nhidapbc

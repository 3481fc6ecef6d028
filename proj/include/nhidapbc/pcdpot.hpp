#pragma once

// Desired potentials built on top of the passive configuration decomposition.
//
// The constrained block is shaped by V_ds (quadratic goal term plus any
// external repulsive/coupling energy). Its gradient splits into
//   v_alpha = D_s^T dV_ds/ds   (drivable along the permitted directions)
//   v_omega = A_s^T dV_ds/ds   (only removable by moving r)
// The unconstrained block uses a two-branch potential: first
//   V_dr = 1/2 v_omega^T Q_r v_omega
// which steers r until s reaches s*, then, after the latched switch,
//   V_dr = 1/2 (r - r*)^T Q_r (r - r*).

#include "nhidapbc/idapbc.hpp"
#include "nhidapbc/models.hpp"

#include <optional>
#include <span>

namespace nhidapbc {

enum class Branch : int {
  ConstrainedStabilization = 1,
  UnconstrainedStabilization = 2,
};

struct PotentialMode {
  Branch branch = Branch::ConstrainedStabilization;
  std::optional<double> switch_time;
};

template <typename Scalar>
struct GoalSpec {
  std::optional<VectorX<Scalar>> s_star;  // none: no fixed goal for s
  std::optional<VectorX<Scalar>> r_star;  // none: r is free
};

/// Energy and s-gradient of potentials that are not part of the goal term
/// (collision avoidance, inter-agent coupling).
template <typename Scalar>
struct ExternalField {
  Scalar energy = Scalar(0);
  VectorX<Scalar> grad;
};

template <typename Scalar>
Scalar V_ds(const MatrixX<Scalar>& q_s, const VectorX<Scalar>& s,
            const std::optional<VectorX<Scalar>>& s_star, const ExternalField<Scalar>* external = nullptr) {
  Scalar value = external ? external->energy : Scalar(0);
  if (s_star) {
    const VectorX<Scalar> e = s - *s_star;
    value += Scalar(0.5) * e.dot(q_s * e);
  }
  return value;
}

template <typename Scalar>
VectorX<Scalar> grad_V_ds(const MatrixX<Scalar>& q_s, const VectorX<Scalar>& s,
                          const std::optional<VectorX<Scalar>>& s_star,
                          const ExternalField<Scalar>* external = nullptr) {
  VectorX<Scalar> grad = VectorX<Scalar>::Zero(s.size());
  if (s_star) {
    detail::require(s_star->size() == s.size(), "goal s* has wrong dimension");
    grad += q_s * (s - *s_star);
  }
  if (external && external->grad.size() > 0) {
    detail::require(external->grad.size() == s.size(), "external gradient has wrong dimension");
    grad += external->grad;
  }
  return grad;
}

template <typename Scalar>
VectorX<Scalar> v_alpha(const PcdStructure<Scalar>& pcd, const VectorX<Scalar>& r,
                        const VectorX<Scalar>& grad_vds) {
  return pcd.d_s(r).transpose() * grad_vds;
}

template <typename Scalar>
VectorX<Scalar> v_omega(const PcdStructure<Scalar>& pcd, const VectorX<Scalar>& r,
                        const VectorX<Scalar>& grad_vds) {
  return pcd.a_s(r).transpose() * grad_vds;
}

/// d v_omega / d r (k x p) for fixed dV_ds/ds.
template <typename Scalar>
MatrixX<Scalar> v_omega_jacobian(const PcdStructure<Scalar>& pcd, const VectorX<Scalar>& r,
                                 const VectorX<Scalar>& grad_vds) {
  const auto dA = pcd.a_s_derivatives(r);
  MatrixX<Scalar> J(pcd.k, pcd.p_dim);
  for (Eigen::Index j = 0; j < pcd.p_dim; ++j) J.col(j) = dA[static_cast<std::size_t>(j)].transpose() * grad_vds;
  return J;
}

namespace detail {

template <typename Scalar>
MatrixX<Scalar> branch_two_weight(const ControllerConfig<Scalar>& cfg, Eigen::Index p_dim) {
  if (cfg.q_r_goal.rows() == p_dim && cfg.q_r_goal.cols() == p_dim) return cfg.q_r_goal;
  if (cfg.q_r.rows() == p_dim && cfg.q_r.cols() == p_dim) return cfg.q_r;
  return MatrixX<Scalar>::Identity(p_dim, p_dim);
}

}  // namespace detail

template <typename Scalar>
Scalar V_dr(const PcdStructure<Scalar>& pcd, const ControllerConfig<Scalar>& cfg, Branch branch,
            const VectorX<Scalar>& r, const VectorX<Scalar>& grad_vds,
            const std::optional<VectorX<Scalar>>& r_star) {
  if (branch == Branch::ConstrainedStabilization) {
    if (!cfg.r_forcing) return Scalar(0);
    const VectorX<Scalar> w = v_omega(pcd, r, grad_vds);
    return Scalar(0.5) * w.dot(cfg.q_r * w);
  }
  if (!r_star) return Scalar(0);
  const VectorX<Scalar> e = r - *r_star;
  return Scalar(0.5) * e.dot(detail::branch_two_weight(cfg, pcd.p_dim) * e);
}

/// First branch: (dv_omega/dr)^T Q_r v_omega. Second branch: Q_r (r - r*),
/// or zero when r is free.
template <typename Scalar>
VectorX<Scalar> grad_V_dr(const PcdStructure<Scalar>& pcd, const ControllerConfig<Scalar>& cfg, Branch branch,
                          const VectorX<Scalar>& r, const VectorX<Scalar>& grad_vds,
                          const std::optional<VectorX<Scalar>>& r_star) {
  if (branch == Branch::ConstrainedStabilization) {
    if (!cfg.r_forcing) return VectorX<Scalar>::Zero(pcd.p_dim);
    return v_omega_jacobian(pcd, r, grad_vds).transpose() * (cfg.q_r * v_omega(pcd, r, grad_vds));
  }
  if (!r_star) return VectorX<Scalar>::Zero(pcd.p_dim);
  detail::require(r_star->size() == pcd.p_dim, "goal r* has wrong dimension");
  return detail::branch_two_weight(cfg, pcd.p_dim) * (r - *r_star);
}

template <typename Scalar>
struct DesiredPotential {
  Scalar value = Scalar(0);     // V_ds + V_dr
  Scalar goal_value = Scalar(0);  // same, without the external energy
  VectorX<Scalar> grad;         // n-vector
};

/// s-block from dV_ds/ds, r-block from dV_dr/dr. Cross-gradients (the
/// r-dependence of v_omega inside V_ds, the s-dependence of V_dr) are not
/// included: each block is forced only by its own potential.
template <typename Scalar>
DesiredPotential<Scalar> evaluate_desired_potential(const PcdStructure<Scalar>& pcd,
                                                    const ControllerConfig<Scalar>& cfg,
                                                    const PotentialMode& mode, const VectorX<Scalar>& q,
                                                    const GoalSpec<Scalar>& goal,
                                                    const ExternalField<Scalar>* external = nullptr) {
  const VectorX<Scalar> s = pcd.s_of(q);
  const VectorX<Scalar> r = pcd.r_of(q);
  const VectorX<Scalar> gs = grad_V_ds(cfg.q_s, s, goal.s_star, external);
  const VectorX<Scalar> gr = grad_V_dr(pcd, cfg, mode.branch, r, gs, goal.r_star);
  DesiredPotential<Scalar> out;
  const Scalar vdr = V_dr(pcd, cfg, mode.branch, r, gs, goal.r_star);
  out.goal_value = V_ds<Scalar>(cfg.q_s, s, goal.s_star) + vdr;
  out.value = out.goal_value + (external ? external->energy : Scalar(0));
  out.grad = pcd.join(gs, gr);
  return out;
}

template <typename Scalar>
VectorX<Scalar> assemble_grad_Vd(const PcdStructure<Scalar>& pcd, const ControllerConfig<Scalar>& cfg,
                                 const PotentialMode& mode, const VectorX<Scalar>& q,
                                 const GoalSpec<Scalar>& goal, const ExternalField<Scalar>* external = nullptr) {
  return evaluate_desired_potential(pcd, cfg, mode, q, goal, external).grad;
}

/// Holonomic agents: V_d = 1/2 (q - q*)^T Q_s (q - q*) plus external energy.
template <typename Scalar>
DesiredPotential<Scalar> evaluate_holonomic_potential(const ControllerConfig<Scalar>& cfg,
                                                      const VectorX<Scalar>& q, const GoalSpec<Scalar>& goal,
                                                      const ExternalField<Scalar>* external = nullptr) {
  DesiredPotential<Scalar> out;
  out.goal_value = V_ds<Scalar>(cfg.q_s, q, goal.s_star);
  out.value = out.goal_value + (external ? external->energy : Scalar(0));
  out.grad = grad_V_ds(cfg.q_s, q, goal.s_star, external);
  return out;
}

/// Latching switch from the first to the second branch once both the goal
/// error and the constrained speed drop below their thresholds.
template <typename Scalar>
PotentialMode switch_supervisor(const PotentialMode& mode, const VectorX<Scalar>& s,
                                const std::optional<VectorX<Scalar>>& s_star, const VectorX<Scalar>& s_dot,
                                const ControllerConfig<Scalar>& cfg, double t = 0.0) {
  if (mode.branch == Branch::UnconstrainedStabilization || !s_star) return mode;
  if ((s - *s_star).norm() < cfg.s_threshold && s_dot.norm() < cfg.sdot_threshold)
    return {Branch::UnconstrainedStabilization, t};
  return mode;
}

// ---------------------------------------------------------------------------
// Repulsive potential fields

class CollisionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMinimumSeparation = 1e-6;

template <typename Scalar>
struct RepulsiveField {
  Scalar energy = Scalar(0);
  VectorX<Scalar> grad;
};

/// U = 1/2 eta (1/rho - 1/rho0)^2 for every neighbour closer than rho0.
template <typename Scalar>
RepulsiveField<Scalar> apf_repulsive(const VectorX<Scalar>& position,
                                     std::span<const VectorX<Scalar>> others, Scalar eta, Scalar rho0) {
  if (!(eta > Scalar(0)) || !(rho0 > Scalar(0)))
    throw std::invalid_argument("repulsive field parameters must be positive");
  RepulsiveField<Scalar> out{Scalar(0), VectorX<Scalar>::Zero(position.size())};
  for (const auto& other : others) {
    detail::require(other.size() == position.size(), "obstacle position has wrong dimension");
    const VectorX<Scalar> d = position - other;
    const Scalar rho = d.norm();
    if (rho < Scalar(kMinimumSeparation))
      throw CollisionError("separation " + std::to_string(static_cast<double>(rho)) + " m below minimum");
    if (rho >= rho0) continue;
    const Scalar gap = Scalar(1) / rho - Scalar(1) / rho0;
    out.energy += Scalar(0.5) * eta * gap * gap;
    out.grad -= eta * gap / (rho * rho * rho) * d;
  }
  return out;
}

}  // namespace nhidapbc

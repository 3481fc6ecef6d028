#pragma once

// Interconnection and damping assignment for plants that are fully actuated
// on the constraint manifold. The target closed loop is
//
//   qdot  =  S M~^{-1} M_d dHd/dp~
//   p~dot = -M_d M~^{-1} S^T dHd/dq + (J - F~ K_v F~^T) dHd/dp~
//   Hd    =  1/2 p~^T M_d^{-1} p~ + V_d
//
// and the feedback law below makes the open loop coincide with it wherever
// the matching conditions hold.

#include "nhidapbc/phcore.hpp"

namespace nhidapbc {

enum class DesiredMassPolicy {
  MatchOpenLoop,  // M_d = M~(q)
  Constant,       // M_d = ControllerConfig::m_d
};

enum class GyroscopicPolicy {
  MatchOpenLoop,  // J = Y(q, p~)
  Zero,
};

template <typename Scalar>
struct ControllerConfig {
  DesiredMassPolicy mass_policy = DesiredMassPolicy::MatchOpenLoop;
  MatrixX<Scalar> m_d;  // used with DesiredMassPolicy::Constant
  GyroscopicPolicy j_policy = GyroscopicPolicy::MatchOpenLoop;
  MatrixX<Scalar> k_v;       // m x m, symmetric positive definite
  MatrixX<Scalar> q_s;       // weight on the constrained-coordinate error
  MatrixX<Scalar> q_r;       // k x k weight on v_omega (first branch)
  MatrixX<Scalar> q_r_goal;  // p x p weight on r - r* (second branch)
  Scalar s_threshold = Scalar(1e-2);
  Scalar sdot_threshold = Scalar(1e-2);
  bool r_forcing = true;  // false ablates the first-branch r potential
};

template <typename Scalar>
MatrixX<Scalar> desired_mass(const MechanicalModel<Scalar>& model, const ControllerConfig<Scalar>& cfg,
                             const VectorX<Scalar>& q) {
  if (cfg.mass_policy == DesiredMassPolicy::Constant) {
    detail::require(cfg.m_d.rows() == model.reduced_dim() && cfg.m_d.cols() == model.reduced_dim(),
                    "desired mass has wrong dimensions");
    return cfg.m_d;
  }
  return reduced_mass(model, q);
}

/// Skew-symmetric J produced by the configured policy.
template <typename Scalar>
MatrixX<Scalar> gyroscopic_assignment(const MechanicalModel<Scalar>& model,
                                      const ControllerConfig<Scalar>& cfg,
                                      const VectorX<Scalar>& q, const VectorX<Scalar>& p_tilde) {
  if (cfg.j_policy == GyroscopicPolicy::Zero)
    return MatrixX<Scalar>::Zero(model.reduced_dim(), model.reduced_dim());
  return gyroscopic_matrix(model, q, p_tilde);
}

/// Every quantity shared by the feedback law, the target field and the
/// matching residuals, evaluated once at a reduced state.
template <typename Scalar>
struct ClosedLoopTerms {
  MatrixX<Scalar> S;
  MatrixX<Scalar> F_tilde;
  MatrixX<Scalar> M_tilde;
  MatrixX<Scalar> M_d;
  MatrixX<Scalar> Y;
  MatrixX<Scalar> J;
  VectorX<Scalar> kinetic_grad;          // d(1/2 p~^T M~^{-1} p~)/dq
  VectorX<Scalar> desired_kinetic_grad;  // d(1/2 p~^T M_d^{-1} p~)/dq
  VectorX<Scalar> dH_dq;
  VectorX<Scalar> dH_dp;
  VectorX<Scalar> dHd_dq;
  VectorX<Scalar> dHd_dp;
};

template <typename Scalar>
ClosedLoopTerms<Scalar> closed_loop_terms(const MechanicalModel<Scalar>& model,
                                          const ControllerConfig<Scalar>& cfg,
                                          const ReducedState<Scalar>& state,
                                          const VectorX<Scalar>& grad_Vd) {
  detail::check_configuration(model, state.q);
  detail::check_reduced(model, state.p_tilde);
  detail::require(grad_Vd.size() == model.n, "desired potential gradient must have size n");
  ClosedLoopTerms<Scalar> t;
  t.S = model.annihilator(state.q);
  t.F_tilde = t.S.transpose() * model.input_map(state.q);
  t.M_tilde = t.S.transpose() * model.mass(state.q) * t.S;
  t.M_d = desired_mass(model, cfg, state.q);
  t.Y = gyroscopic_matrix(model, state.q, state.p_tilde);
  t.J = cfg.j_policy == GyroscopicPolicy::Zero ? MatrixX<Scalar>::Zero(t.Y.rows(), t.Y.cols()) : t.Y;

  const auto open_mass = detail::factor_spd<Scalar>(t.M_tilde, "reduced mass matrix");
  const auto target_mass = detail::factor_spd<Scalar>(t.M_d, "desired mass matrix");
  t.kinetic_grad = reduced_kinetic_gradient(model, state.q, state.p_tilde);
  t.desired_kinetic_grad = cfg.mass_policy == DesiredMassPolicy::MatchOpenLoop
                               ? t.kinetic_grad
                               : VectorX<Scalar>(VectorX<Scalar>::Zero(model.n));
  t.dH_dq = t.kinetic_grad + model.potential_grad(state.q);
  t.dH_dp = open_mass.solve(state.p_tilde);
  t.dHd_dq = t.desired_kinetic_grad + grad_Vd;
  t.dHd_dp = target_mass.solve(state.p_tilde);
  return t;
}

/// IDA-PBC feedback. (F~^T F~)^{-1} F~^T is applied as a rank-revealing
/// least-squares solve; rank loss of F~ is a hard error.
template <typename Scalar>
VectorX<Scalar> control_law(const MechanicalModel<Scalar>& model, const ControllerConfig<Scalar>& cfg,
                            const ReducedState<Scalar>& state, const VectorX<Scalar>& grad_Vd) {
  const auto t = closed_loop_terms(model, cfg, state, grad_Vd);
  detail::require(cfg.k_v.rows() == model.m && cfg.k_v.cols() == model.m, "K_v must be m x m");
  const MatrixX<Scalar> Mt_inv_St = t.M_tilde.llt().solve(t.S.transpose());
  const VectorX<Scalar> matched = t.S.transpose() * t.dH_dq - t.M_d * (Mt_inv_St * t.dHd_dq) -
                                  t.Y * t.dH_dp + t.J * t.dHd_dp;
  Eigen::ColPivHouseholderQR<MatrixX<Scalar>> qr(t.F_tilde);
  if (qr.rank() < model.m) throw ModelError("transformed input matrix F~ lost column rank");
  return qr.solve(matched) - cfg.k_v * (t.F_tilde.transpose() * t.dHd_dp);
}

/// Target closed-loop vector field.
template <typename Scalar>
ReducedRates<Scalar> closed_loop_rhs(const MechanicalModel<Scalar>& model,
                                     const ControllerConfig<Scalar>& cfg,
                                     const ReducedState<Scalar>& state,
                                     const VectorX<Scalar>& grad_Vd) {
  const auto t = closed_loop_terms(model, cfg, state, grad_Vd);
  const auto open_mass = detail::factor_spd<Scalar>(t.M_tilde, "reduced mass matrix");
  const MatrixX<Scalar> Mt_inv_Md = open_mass.solve(t.M_d);
  return {t.S * (Mt_inv_Md * t.dHd_dp),
          -Mt_inv_Md.transpose() * (t.S.transpose() * t.dHd_dq) +
              (t.J - t.F_tilde * cfg.k_v * t.F_tilde.transpose()) * t.dHd_dp};
}

template <typename Scalar>
Scalar desired_hamiltonian(const MechanicalModel<Scalar>& model, const ControllerConfig<Scalar>& cfg,
                           const ReducedState<Scalar>& state, Scalar V_d) {
  const auto target_mass = detail::factor_spd<Scalar>(desired_mass(model, cfg, state.q), "desired mass matrix");
  return Scalar(0.5) * state.p_tilde.dot(target_mass.solve(state.p_tilde)) + V_d;
}

/// y_d^T K_v y_d with y_d = F~^T dHd/dp~; the closed loop dissipates Hd at this rate.
template <typename Scalar>
Scalar dissipation_rate(const MechanicalModel<Scalar>& model, const ControllerConfig<Scalar>& cfg,
                        const ReducedState<Scalar>& state) {
  const VectorX<Scalar> grad = VectorX<Scalar>::Zero(model.n);
  const auto t = closed_loop_terms(model, cfg, state, grad);
  const VectorX<Scalar> y = t.F_tilde.transpose() * t.dHd_dp;
  return y.dot(cfg.k_v * y);
}

/// Rows spanning the left null space of F~ ((n-k-m) x (n-k)); empty when the
/// plant is fully actuated on the constraint manifold.
template <typename Scalar>
MatrixX<Scalar> left_annihilator(const MatrixX<Scalar>& F_tilde) {
  Eigen::FullPivLU<MatrixX<Scalar>> lu(F_tilde.transpose());
  const Eigen::Index dim = F_tilde.rows() - lu.rank();
  if (dim == 0) return MatrixX<Scalar>(0, F_tilde.rows());
  return lu.kernel().transpose();
}

template <typename Scalar>
struct MatchingResiduals {
  VectorX<Scalar> kinetic;
  VectorX<Scalar> potential;
};

template <typename Scalar>
MatchingResiduals<Scalar> matching_residuals(const MechanicalModel<Scalar>& model,
                                             const ControllerConfig<Scalar>& cfg,
                                             const ReducedState<Scalar>& state,
                                             const VectorX<Scalar>& grad_Vd) {
  const auto t = closed_loop_terms(model, cfg, state, grad_Vd);
  const MatrixX<Scalar> Fperp = left_annihilator<Scalar>(t.F_tilde);
  if (Fperp.rows() == 0) return {VectorX<Scalar>(0), VectorX<Scalar>(0)};
  const MatrixX<Scalar> Md_Mt_inv_St = t.M_d * t.M_tilde.llt().solve(t.S.transpose());
  const VectorX<Scalar> kinetic =
      Fperp * (Scalar(2) * t.S.transpose() * t.kinetic_grad - Scalar(2) * Md_Mt_inv_St * t.desired_kinetic_grad -
               Scalar(2) * t.Y * t.dH_dp + Scalar(2) * t.J * t.dHd_dp);
  const VectorX<Scalar> potential =
      Fperp * (t.S.transpose() * model.potential_grad(state.q) - Md_Mt_inv_St * grad_Vd);
  return {kinetic, potential};
}

}  // namespace nhidapbc

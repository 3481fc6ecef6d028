#pragma once

// Constrained port-Hamiltonian machinery for mechanical systems subject to
// Pfaffian constraints A^T(q) qdot = 0.
//
// Full dynamics live in (q, p). Choosing an annihilator S(q) with A^T S = 0,
// the momenta are mapped through T(q) = [S^T; A^T M^{-1}] into the reduced
// pair (p_tilde, p2). On the constraint manifold p2 = 0 and the motion is
// described by (q, p_tilde) alone:
//
//   qdot       = S dH~/dp~
//   p_tilde    = -S^T dH~/dq + Y dH~/dp~ + F~ tau
//   H~         = 1/2 p~^T M~^{-1} p~ + V,   M~ = S^T M S,  F~ = S^T F
//
// with Y_ij = -p^T [S_i, S_j] the gyroscopic matrix induced by the constraints.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nhidapbc {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Model data violates a rank or definiteness assumption at the queried point.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConstraintViolationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Callable description of one agent's open-loop physics.
///
/// The derivative callbacks are optional. When one is empty the central
/// finite-difference fallback below is used instead.
template <typename Scalar>
struct MechanicalModel {
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;
  using MatrixField = std::function<Matrix(const Vector&)>;
  using MatrixFieldDerivatives = std::function<std::vector<Matrix>(const Vector&)>;

  Eigen::Index n = 0;  // configuration dimension
  Eigen::Index k = 0;  // number of Pfaffian constraints
  Eigen::Index m = 0;  // number of inputs

  MatrixField mass;                  // M(q), n x n
  MatrixFieldDerivatives mass_jac;   // dM/dq_b for b = 0..n-1
  std::function<Scalar(const Vector&)> potential;
  std::function<Vector(const Vector&)> potential_grad;
  MatrixField constraint;                  // A(q), n x k
  MatrixFieldDerivatives constraint_jac;   // dA/dq_b for b = 0..n-1
  MatrixField annihilator;                 // S(q), n x (n-k)
  MatrixFieldDerivatives annihilator_jac;  // dS_j/dq (n x n) for each column j
  MatrixField input_map;                   // F(q), n x m

  Eigen::Index reduced_dim() const { return n - k; }
};

template <typename Scalar>
struct FullState {
  VectorX<Scalar> q;
  VectorX<Scalar> p;
};

template <typename Scalar>
struct ReducedState {
  VectorX<Scalar> q;
  VectorX<Scalar> p_tilde;
};

template <typename Scalar>
struct MomentaSplit {
  VectorX<Scalar> p_tilde;
  VectorX<Scalar> p2;
};

template <typename Scalar>
struct ReducedRates {
  VectorX<Scalar> q_dot;
  VectorX<Scalar> p_tilde_dot;
};

template <typename Scalar>
struct FullRates {
  VectorX<Scalar> q_dot;
  VectorX<Scalar> p_dot;
  VectorX<Scalar> lambda;
};

inline constexpr double kFiniteDifferenceStep = 1e-6;
inline constexpr double kConstraintTolerance = 1e-6;

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

template <typename Scalar>
void check_configuration(const MechanicalModel<Scalar>& model, const VectorX<Scalar>& q) {
  require(q.size() == model.n, "configuration has size " + std::to_string(q.size()) +
                                   ", model expects " + std::to_string(model.n));
}

template <typename Scalar>
void check_reduced(const MechanicalModel<Scalar>& model, const VectorX<Scalar>& p_tilde) {
  require(p_tilde.size() == model.reduced_dim(),
          "reduced momenta have size " + std::to_string(p_tilde.size()) + ", model expects " +
              std::to_string(model.reduced_dim()));
}

template <typename Scalar>
void check_input(const MechanicalModel<Scalar>& model, const VectorX<Scalar>& tau) {
  require(tau.size() == model.m, "input has size " + std::to_string(tau.size()) +
                                     ", model expects " + std::to_string(model.m));
}

}  // namespace detail

/// Central differences of a matrix-valued field, one matrix per coordinate.
template <typename Scalar, typename Field>
std::vector<MatrixX<Scalar>> finite_difference_derivatives(const Field& field,
                                                           const VectorX<Scalar>& q,
                                                           Scalar step = Scalar(kFiniteDifferenceStep)) {
  std::vector<MatrixX<Scalar>> out;
  out.reserve(static_cast<std::size_t>(q.size()));
  for (Eigen::Index b = 0; b < q.size(); ++b) {
    VectorX<Scalar> plus = q;
    VectorX<Scalar> minus = q;
    plus(b) += step;
    minus(b) -= step;
    out.push_back((field(plus) - field(minus)) / (Scalar(2) * step));
  }
  return out;
}

template <typename Scalar>
std::vector<MatrixX<Scalar>> mass_derivatives(const MechanicalModel<Scalar>& model,
                                              const VectorX<Scalar>& q) {
  if (model.mass_jac) return model.mass_jac(q);
  return finite_difference_derivatives<Scalar>(model.mass, q);
}

template <typename Scalar>
std::vector<MatrixX<Scalar>> constraint_derivatives(const MechanicalModel<Scalar>& model,
                                                    const VectorX<Scalar>& q) {
  if (model.constraint_jac) return model.constraint_jac(q);
  return finite_difference_derivatives<Scalar>(model.constraint, q);
}

/// dS_j/dq for every column j of S; entry (a, b) is d S_aj / d q_b.
template <typename Scalar>
std::vector<MatrixX<Scalar>> annihilator_derivatives(const MechanicalModel<Scalar>& model,
                                                     const VectorX<Scalar>& q) {
  if (model.annihilator_jac) return model.annihilator_jac(q);
  const auto by_coordinate = finite_difference_derivatives<Scalar>(model.annihilator, q);
  const Eigen::Index cols = model.reduced_dim();
  std::vector<MatrixX<Scalar>> out(static_cast<std::size_t>(cols), MatrixX<Scalar>(model.n, model.n));
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index b = 0; b < model.n; ++b)
      out[static_cast<std::size_t>(j)].col(b) = by_coordinate[static_cast<std::size_t>(b)].col(j);
  return out;
}

/// M~ = S^T M S.
template <typename Scalar>
MatrixX<Scalar> reduced_mass(const MechanicalModel<Scalar>& model, const VectorX<Scalar>& q) {
  const MatrixX<Scalar> S = model.annihilator(q);
  return S.transpose() * model.mass(q) * S;
}

/// dM~/dq_b for b = 0..n-1.
template <typename Scalar>
std::vector<MatrixX<Scalar>> reduced_mass_derivatives(const MechanicalModel<Scalar>& model,
                                                      const VectorX<Scalar>& q) {
  const MatrixX<Scalar> S = model.annihilator(q);
  const MatrixX<Scalar> M = model.mass(q);
  const auto dM = mass_derivatives(model, q);
  const auto dS_cols = annihilator_derivatives(model, q);
  std::vector<MatrixX<Scalar>> out;
  out.reserve(static_cast<std::size_t>(model.n));
  MatrixX<Scalar> dS(model.n, model.reduced_dim());
  for (Eigen::Index b = 0; b < model.n; ++b) {
    for (Eigen::Index j = 0; j < model.reduced_dim(); ++j)
      dS.col(j) = dS_cols[static_cast<std::size_t>(j)].col(b);
    const MatrixX<Scalar> MS = M * S;
    out.push_back(dS.transpose() * MS + S.transpose() * dM[static_cast<std::size_t>(b)] * S +
                  MS.transpose() * dS);
  }
  return out;
}

namespace detail {

template <typename Scalar>
Eigen::LLT<MatrixX<Scalar>> factor_spd(const MatrixX<Scalar>& A, const char* what) {
  Eigen::LLT<MatrixX<Scalar>> llt(A);
  if (llt.info() != Eigen::Success) throw ModelError(std::string(what) + " is not positive definite");
  return llt;
}

}  // namespace detail

template <typename Scalar>
MomentaSplit<Scalar> reduced_momenta(const MechanicalModel<Scalar>& model,
                                     const FullState<Scalar>& state) {
  detail::check_configuration(model, state.q);
  detail::require(state.p.size() == model.n, "momenta size does not match model dimension");
  const auto mass = detail::factor_spd<Scalar>(model.mass(state.q), "mass matrix");
  return {model.annihilator(state.q).transpose() * state.p,
          model.constraint(state.q).transpose() * mass.solve(state.p)};
}

/// Solves T(q) p = (p_tilde, 0) for the on-manifold lift of the reduced momenta.
template <typename Scalar>
VectorX<Scalar> reconstruct_full_momenta(const MechanicalModel<Scalar>& model,
                                         const VectorX<Scalar>& q,
                                         const VectorX<Scalar>& p_tilde) {
  detail::check_configuration(model, q);
  detail::check_reduced(model, p_tilde);
  const auto mass = detail::factor_spd<Scalar>(model.mass(q), "mass matrix");
  MatrixX<Scalar> T(model.n, model.n);
  T.topRows(model.reduced_dim()) = model.annihilator(q).transpose();
  if (model.k > 0)
    T.bottomRows(model.k) = mass.solve(model.constraint(q)).transpose();
  Eigen::FullPivLU<MatrixX<Scalar>> lu(T);
  if (!lu.isInvertible()) throw ModelError("momenta transformation T(q) is singular");
  VectorX<Scalar> rhs = VectorX<Scalar>::Zero(model.n);
  rhs.head(model.reduced_dim()) = p_tilde;
  return lu.solve(rhs);
}

/// Y_ij = -p^T [S_i, S_j](q) with p the on-manifold lift of p_tilde and
/// [S_i, S_j] = (dS_j/dq) S_i - (dS_i/dq) S_j.
template <typename Scalar>
MatrixX<Scalar> gyroscopic_matrix(const MechanicalModel<Scalar>& model,
                                  const VectorX<Scalar>& q,
                                  const VectorX<Scalar>& p_tilde) {
  const VectorX<Scalar> p = reconstruct_full_momenta(model, q, p_tilde);
  const MatrixX<Scalar> S = model.annihilator(q);
  const auto dS = annihilator_derivatives(model, q);
  const Eigen::Index r = model.reduced_dim();
  MatrixX<Scalar> Y = MatrixX<Scalar>::Zero(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = i + 1; j < r; ++j) {
      const VectorX<Scalar> bracket = dS[static_cast<std::size_t>(j)] * S.col(i) -
                                      dS[static_cast<std::size_t>(i)] * S.col(j);
      Y(i, j) = -p.dot(bracket);
      Y(j, i) = -Y(i, j);
    }
  }
  return Y;
}

/// Gradient in q of the reduced kinetic energy 1/2 p~^T M~^{-1}(q) p~.
template <typename Scalar>
VectorX<Scalar> reduced_kinetic_gradient(const MechanicalModel<Scalar>& model,
                                         const VectorX<Scalar>& q,
                                         const VectorX<Scalar>& p_tilde) {
  const auto mass = detail::factor_spd<Scalar>(reduced_mass(model, q), "reduced mass matrix");
  const VectorX<Scalar> v = mass.solve(p_tilde);
  const auto dMt = reduced_mass_derivatives(model, q);
  VectorX<Scalar> grad(model.n);
  for (Eigen::Index b = 0; b < model.n; ++b)
    grad(b) = Scalar(-0.5) * v.dot(dMt[static_cast<std::size_t>(b)] * v);
  return grad;
}

template <typename Scalar>
Scalar reduced_hamiltonian(const MechanicalModel<Scalar>& model, const ReducedState<Scalar>& state) {
  const auto mass = detail::factor_spd<Scalar>(reduced_mass(model, state.q), "reduced mass matrix");
  return Scalar(0.5) * state.p_tilde.dot(mass.solve(state.p_tilde)) + model.potential(state.q);
}

template <typename Scalar>
Scalar full_hamiltonian(const MechanicalModel<Scalar>& model, const FullState<Scalar>& state) {
  const auto mass = detail::factor_spd<Scalar>(model.mass(state.q), "mass matrix");
  return Scalar(0.5) * state.p.dot(mass.solve(state.p)) + model.potential(state.q);
}

/// Open-loop dynamics on the constraint manifold.
template <typename Scalar>
ReducedRates<Scalar> reduced_rhs(const MechanicalModel<Scalar>& model,
                                 const ReducedState<Scalar>& state,
                                 const VectorX<Scalar>& tau) {
  detail::check_configuration(model, state.q);
  detail::check_reduced(model, state.p_tilde);
  detail::check_input(model, tau);
  const MatrixX<Scalar> S = model.annihilator(state.q);
  const auto mass = detail::factor_spd<Scalar>(reduced_mass(model, state.q), "reduced mass matrix");
  const VectorX<Scalar> dH_dp = mass.solve(state.p_tilde);
  const VectorX<Scalar> dH_dq = reduced_kinetic_gradient(model, state.q, state.p_tilde) +
                                model.potential_grad(state.q);
  const MatrixX<Scalar> Y = gyroscopic_matrix(model, state.q, state.p_tilde);
  return {S * dH_dp,
          -S.transpose() * dH_dq + Y * dH_dp + S.transpose() * model.input_map(state.q) * tau};
}

/// A^T(q) M^{-1}(q) p.
template <typename Scalar>
VectorX<Scalar> constraint_violation(const MechanicalModel<Scalar>& model,
                                     const FullState<Scalar>& state) {
  detail::check_configuration(model, state.q);
  const auto mass = detail::factor_spd<Scalar>(model.mass(state.q), "mass matrix");
  return model.constraint(state.q).transpose() * mass.solve(state.p);
}

/// Explicit constrained dynamics in (q, p) with the multiplier eliminated so
/// that d/dt (A^T M^{-1} p) = 0. Used as an oracle for the reduced dynamics.
template <typename Scalar>
FullRates<Scalar> full_constrained_rhs(const MechanicalModel<Scalar>& model,
                                       const FullState<Scalar>& state,
                                       const VectorX<Scalar>& tau,
                                       Scalar tol_c = Scalar(kConstraintTolerance)) {
  detail::check_configuration(model, state.q);
  detail::require(state.p.size() == model.n, "momenta size does not match model dimension");
  detail::check_input(model, tau);
  const VectorX<Scalar>& q = state.q;
  const VectorX<Scalar>& p = state.p;

  const MatrixX<Scalar> M = model.mass(q);
  const auto mass = detail::factor_spd<Scalar>(M, "mass matrix");
  const MatrixX<Scalar> A = model.constraint(q);
  const VectorX<Scalar> q_dot = mass.solve(p);

  const VectorX<Scalar> residual = A.transpose() * q_dot;
  if (residual.size() > 0 && residual.cwiseAbs().maxCoeff() > tol_c)
    throw ConstraintViolationError("state violates the constraint by " +
                                   std::to_string(static_cast<double>(residual.cwiseAbs().maxCoeff())));

  const auto dM = mass_derivatives(model, q);
  VectorX<Scalar> dH_dq = model.potential_grad(q);
  for (Eigen::Index b = 0; b < model.n; ++b)
    dH_dq(b) -= Scalar(0.5) * q_dot.dot(dM[static_cast<std::size_t>(b)] * q_dot);

  const VectorX<Scalar> free_force = -dH_dq + model.input_map(q) * tau;
  VectorX<Scalar> lambda = VectorX<Scalar>::Zero(model.k);
  if (model.k > 0) {
    const MatrixX<Scalar> MinvA = mass.solve(A);
    // d/dt(A^T M^{-1}) p = sum_b qdot_b (dA_b^T M^{-1} p - A^T M^{-1} dM_b M^{-1} p)
    const auto dA = constraint_derivatives(model, q);
    VectorX<Scalar> drift = VectorX<Scalar>::Zero(model.k);
    for (Eigen::Index b = 0; b < model.n; ++b) {
      const auto bi = static_cast<std::size_t>(b);
      drift += q_dot(b) * (dA[bi].transpose() * q_dot - MinvA.transpose() * (dM[bi] * q_dot));
    }
    const MatrixX<Scalar> G = A.transpose() * MinvA;
    Eigen::FullPivLU<MatrixX<Scalar>> lu(G);
    if (!lu.isInvertible()) throw ModelError("constraint Gram matrix A^T M^{-1} A is singular");
    lambda = -lu.solve(drift + MinvA.transpose() * free_force);
  }
  return {q_dot, free_force + A * lambda, lambda};
}

}  // namespace nhidapbc

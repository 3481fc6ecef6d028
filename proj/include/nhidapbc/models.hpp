#pragma once

// Concrete agent models and their passive configuration decomposition (PCD).
//
// A PCD splits q into constrained coordinates s and unconstrained coordinates
// r such that A(q) = [A_s(r); 0], M = M(r) and M_sr^T D_s = 0, where the
// columns of D_s(r) span the motions of s permitted by the constraint.

#include "nhidapbc/phcore.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace nhidapbc {

enum class AgentKind { DiffDrive, KnifeEdge, Arm3Dof };

inline std::string to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::DiffDrive: return "diff_drive";
    case AgentKind::KnifeEdge: return "knife_edge";
    case AgentKind::Arm3Dof: return "arm3dof";
  }
  return "unknown";
}

template <typename Scalar>
struct PcdStructure {
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  Eigen::Index n = 0;
  Eigen::Index k = 0;
  Eigen::Index p_dim = 0;               // number of unconstrained coordinates r
  std::vector<Eigen::Index> s_index;    // positions of s inside q
  std::vector<Eigen::Index> r_index;    // positions of r inside q

  std::function<Matrix(const Vector&)> a_s;                   // (n-p) x k
  std::function<std::vector<Matrix>(const Vector&)> a_s_jac;  // dA_s/dr_j, j = 0..p-1
  std::function<Matrix(const Vector&)> d_s;                   // (n-p) x (n-p-k)

  Eigen::Index s_dim() const { return n - p_dim; }

  Vector s_of(const Vector& q) const {
    Vector s(s_dim());
    for (std::size_t i = 0; i < s_index.size(); ++i) s(static_cast<Eigen::Index>(i)) = q(s_index[i]);
    return s;
  }

  Vector r_of(const Vector& q) const {
    Vector r(p_dim);
    for (std::size_t i = 0; i < r_index.size(); ++i) r(static_cast<Eigen::Index>(i)) = q(r_index[i]);
    return r;
  }

  Vector join(const Vector& s, const Vector& r) const {
    Vector q(n);
    for (std::size_t i = 0; i < s_index.size(); ++i) q(s_index[i]) = s(static_cast<Eigen::Index>(i));
    for (std::size_t i = 0; i < r_index.size(); ++i) q(r_index[i]) = r(static_cast<Eigen::Index>(i));
    return q;
  }

  std::vector<Matrix> a_s_derivatives(const Vector& r) const {
    if (a_s_jac) return a_s_jac(r);
    return finite_difference_derivatives<Scalar>(a_s, r);
  }
};

template <typename Scalar>
struct NonholonomicModel {
  MechanicalModel<Scalar> model;
  PcdStructure<Scalar> pcd;
};

template <typename Scalar>
struct ArmModel {
  MechanicalModel<Scalar> model;
  std::function<Eigen::Matrix<Scalar, 3, 1>(const VectorX<Scalar>&)> fk;
  std::function<Eigen::Matrix<Scalar, 3, Eigen::Dynamic>(const VectorX<Scalar>&)> fk_jac;
};

struct DiffDriveParams {
  double mass = 1.0;
  double inertia = 0.1;
};

struct Arm3DofParams {
  std::array<double, 3> link_masses{1.0, 1.0, 1.0};
  std::array<double, 3> link_lengths{0.5, 0.4, 0.3};
  double gravity = 9.81;
  std::array<double, 3> base{0.0, 0.0, 0.0};
};

namespace detail {

inline void require_positive(double value, const char* name) {
  if (!(value > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
}

// Unicycle-class plant: q = (x, y, theta), no side slip, inputs are the
// forward force and the steering torque so that S^T F = I.
template <typename Scalar>
NonholonomicModel<Scalar> unicycle_class_model(double mass_kg, double inertia_kgm2, bool analytic) {
  require_positive(mass_kg, "mass");
  require_positive(inertia_kgm2, "inertia");
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;
  const Scalar m = Scalar(mass_kg);
  const Scalar inertia = Scalar(inertia_kgm2);

  NonholonomicModel<Scalar> out;
  auto& mm = out.model;
  mm.n = 3;
  mm.k = 1;
  mm.m = 2;
  mm.mass = [m, inertia](const Vector&) {
    Matrix M = Matrix::Zero(3, 3);
    M.diagonal() << m, m, inertia;
    return M;
  };
  mm.potential = [](const Vector&) { return Scalar(0); };
  mm.potential_grad = [](const Vector&) { return Vector(Vector::Zero(3)); };
  mm.constraint = [](const Vector& q) {
    Matrix A(3, 1);
    A << std::sin(q(2)), -std::cos(q(2)), Scalar(0);
    return A;
  };
  mm.annihilator = [](const Vector& q) {
    Matrix S = Matrix::Zero(3, 2);
    S(0, 0) = std::cos(q(2));
    S(1, 0) = std::sin(q(2));
    S(2, 1) = Scalar(1);
    return S;
  };
  mm.input_map = mm.annihilator;
  if (analytic) {
    mm.mass_jac = [](const Vector&) { return std::vector<Matrix>(3, Matrix::Zero(3, 3)); };
    mm.constraint_jac = [](const Vector& q) {
      std::vector<Matrix> d(3, Matrix::Zero(3, 1));
      d[2] << std::cos(q(2)), std::sin(q(2)), Scalar(0);
      return d;
    };
    mm.annihilator_jac = [](const Vector& q) {
      std::vector<Matrix> d(2, Matrix::Zero(3, 3));
      d[0](0, 2) = -std::sin(q(2));
      d[0](1, 2) = std::cos(q(2));
      return d;
    };
  }

  auto& pcd = out.pcd;
  pcd.n = 3;
  pcd.k = 1;
  pcd.p_dim = 1;
  pcd.s_index = {0, 1};
  pcd.r_index = {2};
  pcd.a_s = [](const Vector& r) {
    Matrix a(2, 1);
    a << std::sin(r(0)), -std::cos(r(0));
    return a;
  };
  pcd.d_s = [](const Vector& r) {
    Matrix d(2, 1);
    d << std::cos(r(0)), std::sin(r(0));
    return d;
  };
  if (analytic) {
    pcd.a_s_jac = [](const Vector& r) {
      Matrix d(2, 1);
      d << std::cos(r(0)), std::sin(r(0));
      return std::vector<Matrix>{d};
    };
  }
  return out;
}

}  // namespace detail

/// Differential-drive robot with analytic derivatives.
template <typename Scalar = double>
NonholonomicModel<Scalar> build_diff_drive(double mass_kg, double inertia_kgm2) {
  return detail::unicycle_class_model<Scalar>(mass_kg, inertia_kgm2, true);
}

/// Knife edge. Same constraint class as the differential drive, but all
/// derivatives go through the finite-difference fallback.
template <typename Scalar = double>
NonholonomicModel<Scalar> build_knife_edge(double mass_kg, double inertia_kgm2) {
  return detail::unicycle_class_model<Scalar>(mass_kg, inertia_kgm2, false);
}

/// Anthropomorphic 3-DoF arm: joint 0 yaws about +z, joints 1 and 2 pitch.
/// Links 1 and 2 are uniform rods; the zero pose stretches them along +x at
/// shoulder height l0. Link 0 contributes yaw inertia m0 l0^2 / 12.
template <typename Scalar = double>
ArmModel<Scalar> build_arm3dof(const Arm3DofParams& params) {
  for (double v : params.link_masses) detail::require_positive(v, "link mass");
  for (double v : params.link_lengths) detail::require_positive(v, "link length");
  detail::require_positive(params.gravity, "gravity");

  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  const Scalar m0 = Scalar(params.link_masses[0]);
  const Scalar m1 = Scalar(params.link_masses[1]);
  const Scalar m2 = Scalar(params.link_masses[2]);
  const Scalar l0 = Scalar(params.link_lengths[0]);
  const Scalar l1 = Scalar(params.link_lengths[1]);
  const Scalar l2 = Scalar(params.link_lengths[2]);
  const Scalar g = Scalar(params.gravity);
  const Vector3 base(Scalar(params.base[0]), Scalar(params.base[1]), Scalar(params.base[2]));

  const Scalar yaw_inertia = m0 * l0 * l0 / Scalar(12);
  const Scalar rod1 = m1 * l1 * l1 / Scalar(12);
  const Scalar rod2 = m2 * l2 * l2 / Scalar(12);

  ArmModel<Scalar> out;
  auto& mm = out.model;
  mm.n = 3;
  mm.k = 0;
  mm.m = 3;

  mm.mass = [=](const Vector& q) {
    const Scalar c1 = std::cos(q(1)), c12 = std::cos(q(1) + q(2)), c2 = std::cos(q(2));
    const Scalar rho1 = Scalar(0.5) * l1 * c1;
    const Scalar rho2 = l1 * c1 + Scalar(0.5) * l2 * c12;
    Matrix M = Matrix::Zero(3, 3);
    M(0, 0) = yaw_inertia + m1 * rho1 * rho1 + m2 * rho2 * rho2 + rod1 * c1 * c1 + rod2 * c12 * c12;
    M(1, 1) = m1 * l1 * l1 / Scalar(3) + m2 * (l1 * l1 + Scalar(0.25) * l2 * l2 + l1 * l2 * c2) + rod2;
    M(1, 2) = m2 * (Scalar(0.25) * l2 * l2 + Scalar(0.5) * l1 * l2 * c2) + rod2;
    M(2, 1) = M(1, 2);
    M(2, 2) = m2 * l2 * l2 / Scalar(3);
    return M;
  };
  mm.mass_jac = [=](const Vector& q) {
    const Scalar c1 = std::cos(q(1)), s1 = std::sin(q(1));
    const Scalar c12 = std::cos(q(1) + q(2)), s12 = std::sin(q(1) + q(2));
    const Scalar s2 = std::sin(q(2));
    const Scalar rho1 = Scalar(0.5) * l1 * c1;
    const Scalar rho2 = l1 * c1 + Scalar(0.5) * l2 * c12;
    std::vector<Matrix> d(3, Matrix::Zero(3, 3));
    d[1](0, 0) = Scalar(2) * m1 * rho1 * (Scalar(-0.5) * l1 * s1) +
                 Scalar(2) * m2 * rho2 * (-l1 * s1 - Scalar(0.5) * l2 * s12) -
                 Scalar(2) * rod1 * c1 * s1 - Scalar(2) * rod2 * c12 * s12;
    d[2](0, 0) = Scalar(2) * m2 * rho2 * (Scalar(-0.5) * l2 * s12) - Scalar(2) * rod2 * c12 * s12;
    d[2](1, 1) = -m2 * l1 * l2 * s2;
    d[2](1, 2) = Scalar(-0.5) * m2 * l1 * l2 * s2;
    d[2](2, 1) = d[2](1, 2);
    return d;
  };
  mm.potential = [=](const Vector& q) {
    const Scalar h1 = l0 + Scalar(0.5) * l1 * std::sin(q(1));
    const Scalar h2 = l0 + l1 * std::sin(q(1)) + Scalar(0.5) * l2 * std::sin(q(1) + q(2));
    return g * (Scalar(0.5) * m0 * l0 + m1 * h1 + m2 * h2);
  };
  mm.potential_grad = [=](const Vector& q) {
    const Scalar c1 = std::cos(q(1)), c12 = std::cos(q(1) + q(2));
    Vector grad(3);
    grad << Scalar(0), g * (Scalar(0.5) * m1 * l1 * c1 + m2 * (l1 * c1 + Scalar(0.5) * l2 * c12)),
        g * Scalar(0.5) * m2 * l2 * c12;
    return grad;
  };
  mm.constraint = [](const Vector&) { return Matrix(3, 0); };
  mm.constraint_jac = [](const Vector&) { return std::vector<Matrix>(3, Matrix(3, 0)); };
  mm.annihilator = [](const Vector&) { return Matrix(Matrix::Identity(3, 3)); };
  mm.annihilator_jac = [](const Vector&) { return std::vector<Matrix>(3, Matrix::Zero(3, 3)); };
  mm.input_map = mm.annihilator;

  out.fk = [=](const Vector& q) {
    const Scalar reach = l1 * std::cos(q(1)) + l2 * std::cos(q(1) + q(2));
    const Scalar height = l0 + l1 * std::sin(q(1)) + l2 * std::sin(q(1) + q(2));
    return Vector3(base + Vector3(reach * std::cos(q(0)), reach * std::sin(q(0)), height));
  };
  out.fk_jac = [=](const Vector& q) {
    const Scalar c0 = std::cos(q(0)), s0 = std::sin(q(0));
    const Scalar c1 = std::cos(q(1)), s1 = std::sin(q(1));
    const Scalar c12 = std::cos(q(1) + q(2)), s12 = std::sin(q(1) + q(2));
    const Scalar reach = l1 * c1 + l2 * c12;
    const Scalar dreach1 = -l1 * s1 - l2 * s12;
    const Scalar dreach2 = -l2 * s12;
    Eigen::Matrix<Scalar, 3, Eigen::Dynamic> J(3, 3);
    J << -reach * s0, dreach1 * c0, dreach2 * c0,
          reach * c0, dreach1 * s0, dreach2 * s0,
          Scalar(0), l1 * c1 + l2 * c12, l2 * c12;
    return J;
  };
  return out;
}

// ---------------------------------------------------------------------------
// PCD validation

struct PcdCheck {
  std::string name;
  double max_residual = 0.0;
  bool pass = true;
};

struct PcdReport {
  bool applicable = true;
  std::string note;
  std::vector<PcdCheck> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

struct PcdSampling {
  int samples = 1000;
  std::uint64_t seed = 7;
  double tolerance = 1e-10;
  double s_range = 10.0;
};

inline constexpr const char* kAssumptionProductStructure = "assumption 1: product structure";
inline constexpr const char* kAssumptionConstraintOnS = "assumption 2: constraint depends on r, acts on s";
inline constexpr const char* kAssumptionMassOnR = "assumption 3: inertia depends only on r";
inline constexpr const char* kAssumptionNoCoupling = "assumption 4: M_sr^T D_s = 0";
inline constexpr const char* kAnnihilatorCheck = "annihilator: A^T S = 0";

/// Samples random configurations and reports the largest residual of each
/// PCD assumption. Holonomic models (k = 0) are reported as not applicable.
template <typename Scalar>
PcdReport validate_pcd(const MechanicalModel<Scalar>& model, const PcdStructure<Scalar>* pcd,
                       const PcdSampling& sampling = {}) {
  PcdReport report;
  if (model.k == 0) {
    report.applicable = false;
    report.note = "not applicable, k=0";
    return report;
  }
  if (pcd == nullptr) {
    report.applicable = false;
    report.note = "no decomposition supplied";
    report.checks.push_back({kAssumptionProductStructure, 1.0, false});
    return report;
  }

  std::mt19937_64 rng(sampling.seed);
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  std::uniform_real_distribution<double> position(-sampling.s_range, sampling.s_range);
  auto random_vector = [&](Eigen::Index size, auto& dist) {
    VectorX<Scalar> v(size);
    for (Eigen::Index i = 0; i < size; ++i) v(i) = Scalar(dist(rng));
    return v;
  };

  double product = 0.0, constraint = 0.0, mass = 0.0, coupling = 0.0, annihilator = 0.0;

  // Assumption 1: s and r indices partition the configuration.
  {
    std::vector<int> seen(static_cast<std::size_t>(model.n), 0);
    bool ok = pcd->n == model.n && pcd->k == model.k &&
              static_cast<Eigen::Index>(pcd->s_index.size()) == pcd->s_dim() &&
              static_cast<Eigen::Index>(pcd->r_index.size()) == pcd->p_dim;
    for (auto idx : pcd->s_index) ok = ok && idx >= 0 && idx < model.n && ++seen[static_cast<std::size_t>(idx)] == 1;
    for (auto idx : pcd->r_index) ok = ok && idx >= 0 && idx < model.n && ++seen[static_cast<std::size_t>(idx)] == 1;
    if (!ok) {
      report.checks.push_back({kAssumptionProductStructure, 1.0, false});
      return report;
    }
  }

  auto max_abs = [](const MatrixX<Scalar>& X) {
    return X.size() == 0 ? 0.0 : static_cast<double>(X.cwiseAbs().maxCoeff());
  };

  for (int i = 0; i < sampling.samples; ++i) {
    const VectorX<Scalar> r = random_vector(pcd->p_dim, angle);
    const VectorX<Scalar> s1 = random_vector(pcd->s_dim(), position);
    const VectorX<Scalar> s2 = random_vector(pcd->s_dim(), position);
    const VectorX<Scalar> q1 = pcd->join(s1, r);
    const VectorX<Scalar> q2 = pcd->join(s2, r);

    const MatrixX<Scalar> A = model.constraint(q1);
    const MatrixX<Scalar> As = pcd->a_s(r);
    const MatrixX<Scalar> Ds = pcd->d_s(r);
    MatrixX<Scalar> A_s_rows(pcd->s_dim(), model.k), A_r_rows(pcd->p_dim, model.k);
    for (std::size_t j = 0; j < pcd->s_index.size(); ++j)
      A_s_rows.row(static_cast<Eigen::Index>(j)) = A.row(pcd->s_index[j]);
    for (std::size_t j = 0; j < pcd->r_index.size(); ++j)
      A_r_rows.row(static_cast<Eigen::Index>(j)) = A.row(pcd->r_index[j]);
    constraint = std::max({constraint, max_abs(A_r_rows), max_abs(A_s_rows - As),
                           max_abs(A - model.constraint(q2)), max_abs(Ds.transpose() * As)});

    const MatrixX<Scalar> M = model.mass(q1);
    mass = std::max(mass, max_abs(M - model.mass(q2)));

    MatrixX<Scalar> M_sr(pcd->s_dim(), pcd->p_dim);
    for (std::size_t a = 0; a < pcd->s_index.size(); ++a)
      for (std::size_t b = 0; b < pcd->r_index.size(); ++b)
        M_sr(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = M(pcd->s_index[a], pcd->r_index[b]);
    coupling = std::max(coupling, max_abs(M_sr.transpose() * Ds));

    annihilator = std::max(annihilator, max_abs(A.transpose() * model.annihilator(q1)));
  }

  const double tol = sampling.tolerance;
  report.checks.push_back({kAssumptionProductStructure, product, product <= tol});
  report.checks.push_back({kAssumptionConstraintOnS, constraint, constraint <= tol});
  report.checks.push_back({kAssumptionMassOnR, mass, mass <= tol});
  report.checks.push_back({kAssumptionNoCoupling, coupling, coupling <= tol});
  report.checks.push_back({kAnnihilatorCheck, annihilator, annihilator <= tol});
  return report;
}

}  // namespace nhidapbc

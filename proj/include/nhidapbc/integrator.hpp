#pragma once

#include <Eigen/Dense>

namespace nhidapbc {

/// One classical fourth-order Runge-Kutta step of xdot = f(x).
template <typename Vector, typename Rhs>
Vector rk4_step(const Rhs& f, const Vector& x, typename Vector::Scalar dt) {
  using Scalar = typename Vector::Scalar;
  const Vector k1 = f(x);
  const Vector k2 = f(Vector(x + Scalar(0.5) * dt * k1));
  const Vector k3 = f(Vector(x + Scalar(0.5) * dt * k2));
  const Vector k4 = f(Vector(x + dt * k3));
  return x + (dt / Scalar(6)) * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
}

}  // namespace nhidapbc

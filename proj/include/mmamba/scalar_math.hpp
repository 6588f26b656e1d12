#pragma once

#include <cmath>

namespace mmamba {

/// (e^x - 1) / x. Returns the limit 1 when |x| < 1e-8 and uses a Taylor
/// series for |x| < 1e-3, where expm1(x)/x loses digits.
template <typename Scalar>
Scalar exprel(Scalar x) {
  using std::abs;
  const Scalar ax = abs(x);
  if (ax < Scalar(1e-8)) return Scalar(1);
  if (ax < Scalar(1e-3)) return Scalar(1) + x * (Scalar(0.5) + x * (Scalar(1) / 6 + x / 24));
  return std::expm1(x) / x;
}

/// d/dx exprel(x) = (e^x (x - 1) + 1) / x^2, 1/2 at the origin.
template <typename Scalar>
Scalar exprel_derivative(Scalar x) {
  using std::abs;
  if (abs(x) < Scalar(1e-3)) {
    return Scalar(0.5) + x * (Scalar(1) / 3 + x * (Scalar(0.125) + x / 30));
  }
  return (std::exp(x) * (x - Scalar(1)) + Scalar(1)) / (x * x);
}

/// log(1 + e^x) without overflow.
template <typename Scalar>
Scalar softplus(Scalar x) {
  return x > Scalar(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Inverse of softplus for y > 0.
template <typename Scalar>
Scalar softplus_inverse(Scalar y) {
  return y + std::log(-std::expm1(-y));
}

}  // namespace mmamba

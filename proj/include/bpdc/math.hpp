#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>

#include "bpdc/errors.hpp"

namespace bpdc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Digamma function for positive arguments.
///
/// Shifts the argument up to x >= 6 with psi(x) = psi(x + 1) - 1/x and then
/// evaluates the asymptotic expansion through the x^-14 term. Absolute error
/// is below 1e-12 for x >= 1e-3.
inline double digamma(double x) {
  if (!std::isfinite(x) || x <= 0.0) {
    throw DomainError("digamma: argument must be positive and finite, got " +
                      std::to_string(x));
  }
  double shift = 0.0;
  while (x < 6.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli-number coefficients B_2n / (2n).
  const double series =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 -
                                      inv2 * (1.0 / 132.0 -
                                              inv2 * (691.0 / 32760.0 -
                                                      inv2 / 12.0))))));
  return shift + std::log(x) - 0.5 * inv - series;
}

/// Numerically stable softmax (max-subtracted). Entries far below the max
/// underflow to exactly zero.
inline Vector softmax(const Eigen::Ref<const Vector>& v) {
  if (v.size() == 0) throw DomainError("softmax: empty input");
  if (!v.allFinite()) throw DomainError("softmax: non-finite input");
  const double top = v.maxCoeff();
  Vector out = (v.array() - top).exp().matrix();
  out /= out.sum();
  return out;
}

/// log N(x; mean, var * I), including the normalising constant.
inline double log_gaussian_diag(const Eigen::Ref<const Vector>& x,
                                const Eigen::Ref<const Vector>& mean,
                                double var) {
  if (!(var > 0.0) || !std::isfinite(var)) {
    throw DomainError("log_gaussian_diag: variance must be positive");
  }
  if (x.size() != mean.size()) {
    throw ShapeError("log_gaussian_diag: x and mean differ in length");
  }
  const double d = static_cast<double>(x.size());
  return -0.5 * (d * (kLog2Pi + std::log(var)) + (x - mean).squaredNorm() / var);
}

}  // namespace bpdc

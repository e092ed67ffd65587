#pragma once

// Independent reference computations used to check the inference engine:
// extended-precision dense Gaussians, quadrature over the scale variable,
// Monte-Carlo expectations, brute-force code enumeration and finite
// differences. Nothing in the training path depends on this header.

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "bpdc/inference.hpp"
#include "bpdc/math.hpp"
#include "bpdc/model.hpp"
#include "bpdc/rng.hpp"

namespace bpdc::verify {

using HighPrecision = boost::multiprecision::cpp_bin_float_50;

/// |a - b| / max(|a|, |b|, floor).
inline double rel_error(double a, double b, double floor = 0.0) {
  const double den = std::max({std::abs(a), std::abs(b), floor});
  return den == 0.0 ? 0.0 : std::abs(a - b) / den;
}

/// ln N(x; mean, var I) accumulated in 50-digit arithmetic.
inline double log_gaussian_diag_hp(const Vector& x, const Vector& mean, double var) {
  HighPrecision sq = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const HighPrecision d = HighPrecision(x[i]) - HighPrecision(mean[i]);
    sq += d * d;
  }
  const HighPrecision two_pi = 2 * boost::math::constants::pi<HighPrecision>();
  const HighPrecision D = static_cast<double>(x.size());
  return static_cast<double>(-0.5 * (D * log(two_pi * HighPrecision(var)) + sq / HighPrecision(var)));
}

/// ln N(x; 0, sigma2 I + c f f') by explicit Cholesky of the dense D x D
/// covariance, in 50-digit arithmetic so that c = 1e15 stays well conditioned.
inline double dense_marginal_loglik(const Vector& x, const Vector& f, double sigma2, double c) {
  const auto D = static_cast<std::size_t>(x.size());
  std::vector<HighPrecision> S(D * D);
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t j = 0; j < D; ++j) {
      S[i * D + j] = HighPrecision(c) * HighPrecision(f[Eigen::Index(i)]) * HighPrecision(f[Eigen::Index(j)]);
      if (i == j) S[i * D + j] += HighPrecision(sigma2);
    }
  }
  // In-place lower Cholesky.
  for (std::size_t j = 0; j < D; ++j) {
    HighPrecision diag = S[j * D + j];
    for (std::size_t k = 0; k < j; ++k) diag -= S[j * D + k] * S[j * D + k];
    S[j * D + j] = sqrt(diag);
    for (std::size_t i = j + 1; i < D; ++i) {
      HighPrecision v = S[i * D + j];
      for (std::size_t k = 0; k < j; ++k) v -= S[i * D + k] * S[j * D + k];
      S[i * D + j] = v / S[j * D + j];
    }
  }
  HighPrecision logdet = 0;
  std::vector<HighPrecision> y(D);
  HighPrecision quad = 0;
  for (std::size_t i = 0; i < D; ++i) {
    logdet += 2 * log(S[i * D + i]);
    HighPrecision v = HighPrecision(x[Eigen::Index(i)]);
    for (std::size_t k = 0; k < i; ++k) v -= S[i * D + k] * y[k];
    y[i] = v / S[i * D + i];
    quad += y[i] * y[i];
  }
  const HighPrecision two_pi = 2 * boost::math::constants::pi<HighPrecision>();
  return static_cast<double>(-0.5 * (HighPrecision(static_cast<double>(D)) * log(two_pi) + logdet + quad));
}

struct ScaleQuadrature {
  double mean = 0.0;
  double var = 0.0;
  double log_marginal = 0.0;  // ln of integral N(x; l f, s2 I) N(l; 0, c) dl
};

/// Moments of p(lambda | x) and the evidence by adaptive Gauss-Kronrod
/// quadrature of the unnormalised joint, evaluated term by term.
inline ScaleQuadrature scale_posterior_quadrature(const Vector& x, const Vector& f, double sigma2,
                                                  double c) {
  const double D = static_cast<double>(x.size());
  auto logp = [&](double lam) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double r = x[i] - lam * f[i];
      s += r * r;
    }
    return -0.5 * (D * (kLog2Pi + std::log(sigma2)) + s / sigma2) -
           0.5 * (kLog2Pi + std::log(c) + lam * lam / c);
  };
  double mode = 0.0;
  const double fn = f.norm();
  if (fn > 0.0) {
    const double R = 2.0 * x.norm() / fn + 1.0;
    mode = boost::math::tools::brent_find_minima([&](double l) { return -logp(l); }, -R, R,
                                                 std::numeric_limits<double>::digits / 2)
               .first;
  }
  double width = 1.0;
  for (int pass = 0; pass < 3; ++pass) {
    const double h = std::max(width, 1e-300);
    const double lp = logp(mode + h), l0 = logp(mode), lm = logp(mode - h);
    const double curv = -(lp - 2.0 * l0 + lm) / (h * h);
    if (!(curv > 0.0)) break;
    width = 1.0 / std::sqrt(curv);
    mode += ((lp - lm) / (2.0 * h)) / curv;
  }
  const double l0 = logp(mode);
  const double lo = -40.0 * width, hi = 40.0 * width;
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  auto w = [&](double u) { return std::exp(logp(mode + u) - l0); };
  const double z0 = GK::integrate(w, lo, hi, 20, 1e-14);
  const double z1 = GK::integrate([&](double u) { return u * w(u); }, lo, hi, 20, 1e-14);
  const double z2 = GK::integrate([&](double u) { return u * u * w(u); }, lo, hi, 20, 1e-14);
  ScaleQuadrature out;
  const double shift = z1 / z0;
  out.mean = mode + shift;
  out.var = z2 / z0 - shift * shift;
  out.log_marginal = l0 + std::log(z0);
  return out;
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Average of ln N(x; lambda f, sigma2 I) over lambda ~ N(q_mean, q_var).
inline MonteCarloEstimate expected_loglik_monte_carlo(const Vector& x, const Vector& f,
                                                      double q_mean, double q_var, double sigma2,
                                                      std::size_t draws, Rng& rng) {
  const double D = static_cast<double>(x.size());
  const double sd = std::sqrt(q_var);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double lam = q_mean + sd * rng.normal();
    double s = 0.0;
    for (Eigen::Index d = 0; d < x.size(); ++d) {
      const double r = x[d] - lam * f[d];
      s += r * r;
    }
    const double v = -0.5 * (D * (kLog2Pi + std::log(sigma2)) + s / sigma2);
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(draws);
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  return {mean, std::sqrt(var / (n - 1.0))};
}

/// Direct L_pi score: marginal_loglik on an explicitly decoded f plus the
/// per-factor digamma prior; no precomputed Gram matrix.
inline double direct_score(const Vector& x, const ModelState& model, const BetaPosteriorBank& bank,
                           const ActiveMask& mask, const BinaryCode& z) {
  return marginal_loglik(x, decode(model, z), model.hyper) + expected_log_prior(z, bank, mask);
}

/// Best code over every binary vector (respecting mask and L_max), counting
/// upwards through all 2^K integers; ties to the lexicographically smallest code.
inline SparseCode brute_force_code(const Vector& x, const ModelState& model,
                                   const BetaPosteriorBank& bank, const ActiveMask& mask) {
  const int K = model.hyper.K;
  SparseCode best;
  best.score = -std::numeric_limits<double>::infinity();
  for (std::uint64_t p = 0; p < (std::uint64_t{1} << K); ++p) {
    BinaryCode z(static_cast<std::size_t>(K));
    int ones = 0;
    bool allowed = true;
    for (int k = 0; k < K; ++k) {
      z[static_cast<std::size_t>(k)] = (p >> k) & 1U;
      ones += z[static_cast<std::size_t>(k)];
      if (z[static_cast<std::size_t>(k)] && !mask[static_cast<std::size_t>(k)]) allowed = false;
    }
    if (!allowed || ones > model.hyper.L_max) continue;
    const double s = direct_score(x, model, bank, mask, z);
    if (s > best.score || (s == best.score && z < best.z)) {
      best.score = s;
      best.z = z;
    }
  }
  best.active_set = support(best.z);
  return best;
}

/// Central finite differences of batch_expected_loglik w.r.t. every theta entry.
inline std::vector<double> theta_gradient_fd(const ModelState& model, const Matrix& X,
                                             std::span<const SparseCode> codes,
                                             std::span<const ScalePosterior> qs, double h = 1e-6) {
  ModelState probe = model;
  std::vector<double> theta = model.pack_theta();
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    probe.unpack_theta(theta);
    const double up = batch_expected_loglik(probe, X, codes, qs);
    theta[i] = saved - h;
    probe.unpack_theta(theta);
    const double down = batch_expected_loglik(probe, X, codes, qs);
    theta[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

/// Largest entrywise relative error, with entries below 1e-3 of the largest
/// reference magnitude compared against that floor instead of themselves.
inline double max_gradient_rel_error(std::span<const double> analytic,
                                     std::span<const double> numeric) {
  double scale = 0.0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  const double floor = std::max(1e-3 * scale, 1e-10);
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, rel_error(analytic[i], numeric[i], floor));
  }
  return worst;
}

}  // namespace bpdc::verify

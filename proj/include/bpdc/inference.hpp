#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "bpdc/errors.hpp"
#include "bpdc/math.hpp"
#include "bpdc/model.hpp"
#include "bpdc/multiplexer_net.hpp"

namespace bpdc {

/// q(pi) = prod_k Beta(pi_k | a_k, b_k).
struct BetaPosteriorBank {
  Vector a;
  Vector b;

  static BetaPosteriorBank prior(const HyperParams& h) {
    h.validate();
    return {Vector::Constant(h.K, h.prior_a()), Vector::Constant(h.K, h.prior_b())};
  }

  int size() const { return static_cast<int>(a.size()); }

  Vector expected_pi() const { return (a.array() / (a.array() + b.array())).matrix(); }

  void validate() const {
    if (a.size() != b.size()) throw ShapeError("BetaPosteriorBank: a and b differ in length");
    if (!(a.array() > 0.0).all() || !(b.array() > 0.0).all() || !a.allFinite() ||
        !b.allFinite()) {
      throw DomainError("BetaPosteriorBank: parameters must be positive and finite");
    }
  }
};

/// Gaussian posterior q(lambda_n).
struct ScalePosterior {
  double mean = 0.0;
  double var = 0.0;
};

/// Factors still considered by the sparse coder. Pruning only ever clears bits.
struct ActiveMask {
  std::vector<std::uint8_t> active;

  static ActiveMask all(int K) { return {std::vector<std::uint8_t>(static_cast<std::size_t>(K), 1)}; }
  int size() const { return static_cast<int>(active.size()); }
  bool operator[](std::size_t k) const { return active[k] != 0; }
  int count() const {
    return static_cast<int>(std::count(active.begin(), active.end(), std::uint8_t{1}));
  }
  bool operator==(const ActiveMask&) const = default;
};

/// Step size (tau0 + t)^-kappa for the stochastic q(pi) update.
inline double learning_rate(double tau0, double kappa, std::uint64_t t) {
  return std::pow(tau0 + static_cast<double>(t), -kappa);
}

/// Conjugate posterior of the per-datum scale:
/// var = (1/c + f'f/sigma2)^-1, mean = var * f'x / sigma2.
inline ScalePosterior update_q_lambda(const Eigen::Ref<const Vector>& x,
                                      const Eigen::Ref<const Vector>& f,
                                      const HyperParams& h) {
  if (x.size() != f.size()) throw ShapeError("update_q_lambda: x and f differ in length");
  if (!x.allFinite() || !f.allFinite()) throw NumericError("update_q_lambda: non-finite input");
  const double var = 1.0 / (1.0 / h.c + f.squaredNorm() / h.sigma2);
  return {var * f.dot(x) / h.sigma2, var};
}

/// Stochastic natural-gradient step on q(pi) from a minibatch of codes.
inline BetaPosteriorBank update_q_pi(const BetaPosteriorBank& bank,
                                     std::span<const BinaryCode> z_batch, long N,
                                     double eta, const HyperParams& h) {
  h.validate();
  if (z_batch.empty()) throw DomainError("update_q_pi: empty batch");
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("update_q_pi: eta must lie in [0, 1]");
  const int K = bank.size();
  Vector ones = Vector::Zero(K);
  for (const auto& z : z_batch) {
    if (static_cast<int>(z.size()) != K) throw ShapeError("update_q_pi: code length != K");
    for (int k = 0; k < K; ++k) ones[k] += z[static_cast<std::size_t>(k)];
  }
  const double batch = static_cast<double>(z_batch.size());
  const double scale = static_cast<double>(N) / batch;
  BetaPosteriorBank out = bank;
  for (int k = 0; k < K; ++k) {
    const double a_target = h.prior_a() + scale * ones[k];
    const double b_target = h.prior_b() + scale * (batch - ones[k]);
    out.a[k] = (1.0 - eta) * bank.a[k] + eta * a_target;
    out.b[k] = (1.0 - eta) * bank.b[k] + eta * b_target;
  }
  return out;
}

/// ln N(x; 0, sigma2 I + c f f') from the sufficient statistics x'x, f'x, f'f.
/// Uses the matrix-determinant lemma and Sherman-Morrison with c entering only
/// through 1/c.
inline double marginal_loglik_from_stats(double xx, double fx, double ff, int D,
                                         const HyperParams& h) {
  const double inv_c = 1.0 / h.c;
  const double s2 = h.sigma2;
  const double logdet = D * std::log(s2) + std::log1p(ff / (inv_c * s2));
  const double quad = (xx - fx * fx / (inv_c * s2 + ff)) / s2;
  return -0.5 * (D * kLog2Pi + logdet + quad);
}

/// Log marginal likelihood of x with the scale integrated out.
inline double marginal_loglik(const Eigen::Ref<const Vector>& x,
                              const Eigen::Ref<const Vector>& f, const HyperParams& h) {
  if (x.size() != f.size()) throw ShapeError("marginal_loglik: x and f differ in length");
  return marginal_loglik_from_stats(x.squaredNorm(), f.dot(x), f.squaredNorm(),
                                    static_cast<int>(x.size()), h);
}

/// E_q[ln N(x; lambda f, sigma2 I)] for lambda ~ q.
inline double expected_loglik(const Eigen::Ref<const Vector>& x,
                              const Eigen::Ref<const Vector>& f, const ScalePosterior& q,
                              const HyperParams& h) {
  if (x.size() != f.size()) throw ShapeError("expected_loglik: x and f differ in length");
  const double D = static_cast<double>(x.size());
  const double sq = (x - q.mean * f).squaredNorm() + q.var * f.squaredNorm();
  return -0.5 * sq / h.sigma2 - 0.5 * D * (kLog2Pi + std::log(h.sigma2));
}

/// d expected_loglik / d f.
inline Vector expected_loglik_grad_f(const Eigen::Ref<const Vector>& x,
                                     const Eigen::Ref<const Vector>& f,
                                     const ScalePosterior& q, const HyperParams& h) {
  return (q.mean * (x - q.mean * f) - q.var * f) / h.sigma2;
}

/// E_q(pi)[ln p(z | pi)] summed over unpruned factors.
inline double expected_log_prior(std::span<const std::uint8_t> z,
                                 const BetaPosteriorBank& bank, const ActiveMask& mask) {
  const int K = bank.size();
  if (static_cast<int>(z.size()) != K || mask.size() != K) {
    throw ShapeError("expected_log_prior: code, bank and mask lengths differ");
  }
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    if (!mask[static_cast<std::size_t>(k)]) continue;
    const double both = digamma(bank.a[k] + bank.b[k]);
    total += z[static_cast<std::size_t>(k)] ? digamma(bank.a[k]) - both
                                            : digamma(bank.b[k]) - both;
  }
  return total;
}

/// Scores codes under the scale-marginalised objective
///   L_pi(z) = marginal_loglik(x, f(z)) + expected_log_prior(z)
/// for a fixed model and bank. Precomputes phi'phi and the per-factor prior
/// terms so that a candidate costs one network pass plus an M x M quadratic.
class CodeScorer {
 public:
  CodeScorer(const ModelState& model, const BetaPosteriorBank& bank, const ActiveMask& mask)
      : model_(&model), mask_(&mask) {
    check_model(model);
    const int K = model.hyper.K;
    if (bank.size() != K || mask.size() != K) {
      throw ShapeError("CodeScorer: bank/mask length != K");
    }
    gram_ = model.phi.transpose() * model.phi;
    prior_delta_.assign(static_cast<std::size_t>(K), 0.0);
    for (int k = 0; k < K; ++k) {
      if (!mask[static_cast<std::size_t>(k)]) continue;
      const double both = digamma(bank.a[k] + bank.b[k]);
      const double on = digamma(bank.a[k]) - both;
      const double off = digamma(bank.b[k]) - both;
      prior_base_ += off;
      prior_delta_[static_cast<std::size_t>(k)] = on - off;
    }
  }

  struct Datum {
    Vector phi_t_x;
    double xx;
  };

  Datum prepare(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != model_->hyper.D) throw ShapeError("CodeScorer: datum length != D");
    return {model_->phi.transpose() * x, x.squaredNorm()};
  }

  double prior(std::span<const std::uint8_t> z) const {
    double s = prior_base_;
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (z[k] && (*mask_)[k]) s += prior_delta_[k];
    }
    return s;
  }

  double likelihood(const Datum& d, std::span<const std::uint8_t> z) const {
    const Vector xi = model_->net.forward(z);
    const double ff = xi.dot(gram_ * xi);
    const double fx = xi.dot(d.phi_t_x);
    return marginal_loglik_from_stats(d.xx, fx, ff, model_->hyper.D, model_->hyper);
  }

  double score(const Datum& d, std::span<const std::uint8_t> z) const {
    return likelihood(d, z) + prior(z);
  }

  const ModelState& model() const { return *model_; }
  const ActiveMask& mask() const { return *mask_; }

 private:
  const ModelState* model_;
  const ActiveMask* mask_;
  Matrix gram_;
  double prior_base_ = 0.0;
  std::vector<double> prior_delta_;
};

/// Work counters from a greedy search.
struct GreedyTrace {
  std::size_t evaluations = 0;           // candidate scores computed
  std::vector<double> accepted_scores;   // zeta after each accepted bit, starting with the empty code
};

/// Greedy forward selection of bits. Starts from the empty code and, while
/// |Omega| < L_max, adds the unpruned bit whose inclusion scores highest,
/// stopping as soon as that best candidate does not strictly improve the
/// current score. Ties go to the smallest index.
inline SparseCode greedy_sparse_code(const CodeScorer& scorer, const CodeScorer::Datum& datum,
                                     GreedyTrace* trace = nullptr) {
  const ModelState& model = scorer.model();
  const ActiveMask& mask = scorer.mask();
  const int K = model.hyper.K;
  SparseCode code;
  code.z.assign(static_cast<std::size_t>(K), 0);
  double current = scorer.score(datum, code.z);
  if (trace) {
    trace->evaluations += 1;
    trace->accepted_scores.push_back(current);
  }
  while (static_cast<int>(code.active_set.size()) < model.hyper.L_max) {
    int best_j = -1;
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < K; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      if (!mask[uj] || code.z[uj]) continue;
      code.z[uj] = 1;
      const double s = scorer.score(datum, code.z);
      code.z[uj] = 0;
      if (trace) trace->evaluations += 1;
      if (s > best) {
        best = s;
        best_j = j;
      }
    }
    if (best_j < 0 || !(best > current)) break;
    code.z[static_cast<std::size_t>(best_j)] = 1;
    code.active_set.insert(
        std::upper_bound(code.active_set.begin(), code.active_set.end(), best_j), best_j);
    current = best;
    if (trace) trace->accepted_scores.push_back(current);
  }
  code.score = current;
  return code;
}

/// Convenience overload that builds a scorer for a single datum.
inline SparseCode greedy_sparse_code(const Eigen::Ref<const Vector>& x, const ModelState& model,
                                     const BetaPosteriorBank& bank, const ActiveMask& mask,
                                     GreedyTrace* trace = nullptr) {
  CodeScorer scorer(model, bank, mask);
  return greedy_sparse_code(scorer, scorer.prepare(x), trace);
}

/// Exact maximiser of L_pi over all codes with at most L_max bits drawn from
/// the unpruned factors. Ties go to the lexicographically smallest code.
inline SparseCode exhaustive_sparse_code(const Eigen::Ref<const Vector>& x,
                                         const ModelState& model, const BetaPosteriorBank& bank,
                                         const ActiveMask& mask, int K_limit) {
  if (K_limit > 20) throw RefusalError("exhaustive_sparse_code: K_limit must be <= 20");
  std::vector<int> free_bits;
  for (int k = 0; k < model.hyper.K; ++k) {
    if (mask[static_cast<std::size_t>(k)]) free_bits.push_back(k);
  }
  if (static_cast<int>(free_bits.size()) > K_limit) {
    throw RefusalError("exhaustive_sparse_code: " + std::to_string(free_bits.size()) +
                       " active factors exceed K_limit = " + std::to_string(K_limit));
  }
  CodeScorer scorer(model, bank, mask);
  const auto datum = scorer.prepare(x);
  const std::uint64_t total = std::uint64_t{1} << free_bits.size();
  SparseCode best;
  best.score = -std::numeric_limits<double>::infinity();
  BinaryCode z(static_cast<std::size_t>(model.hyper.K), 0);
  for (std::uint64_t pattern = 0; pattern < total; ++pattern) {
    if (std::popcount(pattern) > model.hyper.L_max) continue;
    for (std::size_t i = 0; i < free_bits.size(); ++i) {
      z[static_cast<std::size_t>(free_bits[i])] = (pattern >> i) & 1U;
    }
    const double s = scorer.score(datum, z);
    if (s > best.score || (s == best.score && z < best.z)) {
      best.score = s;
      best.z = z;
    }
  }
  best.active_set = support(best.z);
  return best;
}

/// Greedy codes for every column of X under a fixed model and bank.
inline std::vector<SparseCode> encode_all(const Matrix& X, const ModelState& model,
                                          const BetaPosteriorBank& bank, const ActiveMask& mask) {
  const CodeScorer scorer(model, bank, mask);
  std::vector<SparseCode> out;
  out.reserve(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    out.push_back(greedy_sparse_code(scorer, scorer.prepare(X.col(i))));
  }
  return out;
}

/// Sum over a batch of expected_loglik(x_n, f(z_n), q_n): the theta objective.
inline double batch_expected_loglik(const ModelState& model, const Matrix& X,
                                    std::span<const SparseCode> codes,
                                    std::span<const ScalePosterior> qs) {
  double total = 0.0;
  for (std::size_t n = 0; n < codes.size(); ++n) {
    const auto col = static_cast<Eigen::Index>(n);
    total += expected_loglik(X.col(col), decode(model, codes[n].z), qs[n], model.hyper);
  }
  return total;
}

/// Gradient of batch_expected_loglik w.r.t. theta, in pack_theta() order.
inline std::vector<double> theta_gradient(const ModelState& model, const Matrix& X,
                                          std::span<const SparseCode> codes,
                                          std::span<const ScalePosterior> qs) {
  if (static_cast<std::size_t>(X.cols()) != codes.size() || codes.size() != qs.size()) {
    throw ShapeError("theta_gradient: batch sizes disagree");
  }
  check_model(model);
  const MultiplexerNet& net = model.net;
  Matrix dphi = Matrix::Zero(model.phi.rows(), model.phi.cols());
  std::vector<double> out(model.theta_size(), 0.0);
  std::vector<double> scratch(net.parameter_count());
  ForwardCache cache;
  for (std::size_t n = 0; n < codes.size(); ++n) {
    const auto col = static_cast<Eigen::Index>(n);
    const Vector xi = net.forward(codes[n].z, cache);
    const Vector f = model.phi * xi;
    const Vector gf = expected_loglik_grad_f(X.col(col), f, qs[n], model.hyper);
    dphi.noalias() += gf * xi.transpose();
    const NetGradients g = net.backward(cache, model.phi.transpose() * gf);
    MultiplexerNet::pack_gradients(g, scratch);
    for (std::size_t i = 0; i < scratch.size(); ++i) out[i] += scratch[i];
  }
  std::copy(dphi.data(), dphi.data() + dphi.size(),
            out.begin() + static_cast<std::ptrdiff_t>(net.parameter_count()));
  return out;
}

/// One ADAM ascent step on the expected complete-data log-likelihood for the
/// network and dictionary jointly, followed by the non-negative projection
/// when enabled.
inline void m_step_theta(const Matrix& X_batch, std::span<const SparseCode> codes,
                         std::span<const ScalePosterior> qs, ModelState& model,
                         AdamState& adam) {
  std::vector<double> grad = theta_gradient(model, X_batch, codes, qs);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericError("m_step_theta: non-finite gradient at theta index " +
                         std::to_string(i) + " (batch of " + std::to_string(codes.size()) +
                         ")");
    }
    grad[i] = -grad[i];
  }
  std::vector<double> theta = model.pack_theta();
  adam_step(theta, grad, adam);
  model.unpack_theta(theta);
  project_nonneg(model);
}

/// Deactivates every factor with E[pi_k] < threshold. Never reactivates.
inline ActiveMask prune_factors(const BetaPosteriorBank& bank, const ActiveMask& mask,
                                double threshold) {
  if (!(threshold >= 0.0 && threshold < 1.0)) {
    throw DomainError("prune_factors: threshold must lie in [0, 1)");
  }
  if (bank.size() != mask.size()) throw ShapeError("prune_factors: bank/mask length differ");
  ActiveMask out = mask;
  const Vector pi = bank.expected_pi();
  for (int k = 0; k < bank.size(); ++k) {
    if (pi[k] < threshold) out.active[static_cast<std::size_t>(k)] = 0;
  }
  return out;
}

}  // namespace bpdc

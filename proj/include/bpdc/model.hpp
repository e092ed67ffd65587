#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bpdc/errors.hpp"
#include "bpdc/math.hpp"
#include "bpdc/multiplexer_net.hpp"
#include "bpdc/rng.hpp"

namespace bpdc {

/// Prior and structural hyperparameters of the factor model.
struct HyperParams {
  double alpha = 1.0;    // beta-process concentration
  double gamma = 1.0;    // beta-process mass
  double sigma2 = 100.0; // observation noise variance
  double c = 1e15;       // prior variance of the per-datum scale
  int K = 75;            // number of latent bits
  int M = 256;           // dictionary atoms
  int D = 784;           // observation dimension
  int L_max = 75;        // cap on active bits per datum
  double prune_threshold = 1e-3;
  bool nonneg_dict = false;

  /// Beta prior on pi_k: Beta(alpha*gamma/K, alpha*(1 - gamma/K)).
  double prior_a() const { return alpha * gamma / K; }
  double prior_b() const { return alpha * (1.0 - gamma / K); }

  void validate() const {
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    if (!positive(alpha)) throw DomainError("alpha must be positive");
    if (!positive(gamma)) throw DomainError("gamma must be positive");
    if (!positive(sigma2)) throw DomainError("sigma2 must be positive");
    if (!positive(c)) throw DomainError("c must be positive");
    if (K < 1 || M < 1 || D < 1) throw DomainError("K, M and D must be >= 1");
    if (L_max < 1 || L_max > K) throw DomainError("L_max must lie in [1, K]");
    if (!(prune_threshold >= 0.0 && prune_threshold < 1.0)) {
      throw DomainError("prune_threshold must lie in [0, 1)");
    }
    if (!(gamma < K)) {
      throw InvalidPriorError("gamma must be < K so that the beta prior's "
                              "second parameter alpha*(1-gamma/K) is positive");
    }
  }
};

/// Dictionary, multiplexer network and hyperparameters.
struct ModelState {
  HyperParams hyper;
  Matrix phi;  // D x M
  MultiplexerNet net;

  std::size_t theta_size() const {
    return net.parameter_count() + static_cast<std::size_t>(phi.size());
  }

  /// theta = [network parameters, phi column-major].
  std::vector<double> pack_theta() const {
    std::vector<double> out(theta_size());
    const std::size_t n = net.parameter_count();
    net.pack(std::span<double>(out).first(n));
    std::copy(phi.data(), phi.data() + phi.size(), out.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  void unpack_theta(std::span<const double> theta) {
    if (theta.size() != theta_size()) throw ShapeError("unpack_theta: size mismatch");
    const std::size_t n = net.parameter_count();
    net.unpack(theta.first(n));
    std::copy(theta.begin() + static_cast<std::ptrdiff_t>(n), theta.end(), phi.data());
  }
};

/// Support of z together with its objective value.
struct SparseCode {
  BinaryCode z;
  std::vector<int> active_set;
  double score = 0.0;
};

inline std::vector<int> support(const BinaryCode& z) {
  std::vector<int> out;
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (z[k]) out.push_back(static_cast<int>(k));
  }
  return out;
}

inline void project_nonneg(ModelState& model) {
  if (model.hyper.nonneg_dict) model.phi = model.phi.cwiseMax(0.0);
}

/// Fresh model: phi ~ Normal(0, 1/D) (clamped when non-negative), network
/// [K, hidden..., M] with N(0, 1/fan_in) weights.
inline ModelState make_model(const HyperParams& hyper, const std::vector<int>& hidden,
                             Activation activation, Rng& rng) {
  hyper.validate();
  ModelState m;
  m.hyper = hyper;
  m.phi = Matrix(hyper.D, hyper.M);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hyper.D));
  for (Eigen::Index j = 0; j < m.phi.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.phi.rows(); ++i) m.phi(i, j) = scale * rng.normal();
  }
  project_nonneg(m);
  std::vector<int> dims{hyper.K};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(hyper.M);
  m.net = MultiplexerNet::random(std::move(dims), activation, rng);
  return m;
}

inline void check_model(const ModelState& model) {
  if (model.phi.rows() != model.hyper.D || model.phi.cols() != model.hyper.M) {
    throw ShapeError("dictionary shape does not match D x M");
  }
  if (model.net.output_dim() != model.hyper.M || model.net.input_dim() != model.hyper.K) {
    throw ShapeError("network dims do not match K -> M");
  }
}

/// f = phi * net(z).
inline Vector decode(const ModelState& model, std::span<const std::uint8_t> z) {
  if (model.net.output_dim() != model.phi.cols()) {
    throw ShapeError("decode: network output dim != dictionary columns");
  }
  return model.phi * model.net.forward(z);
}

struct SampleOptions {
  double c_sample = 1.0;          // variance of lambda_n for synthetic data
  std::optional<Vector> pi;       // fixed factor probabilities instead of Beta draws
  double dirichlet_scale = 0.0;   // > 0: xi ~ Dir(scale * mean); 0: xi at its mean
  std::optional<double> noise_sigma2;  // overrides hyper.sigma2 for the noise draw
};

struct SyntheticData {
  Matrix X;                    // D x n
  std::vector<BinaryCode> Z;   // n codes of length K
  Vector lambda;               // n
  Vector pi;                   // K
};

/// Ancestral sampling from the generative model.
inline SyntheticData sample_dataset(const ModelState& model, int n, Rng& rng,
                                    const SampleOptions& opts = {}) {
  const HyperParams& h = model.hyper;
  h.validate();
  check_model(model);
  if (n < 1) throw DomainError("sample_dataset: n must be >= 1");
  if (!(opts.c_sample > 0.0)) throw DomainError("sample_dataset: c_sample must be positive");

  SyntheticData out;
  if (opts.pi) {
    if (opts.pi->size() != h.K) throw ShapeError("sample_dataset: pi must have length K");
    out.pi = *opts.pi;
  } else {
    out.pi.resize(h.K);
    for (int k = 0; k < h.K; ++k) out.pi[k] = rng.beta(h.prior_a(), h.prior_b());
  }
  const double noise_sd = std::sqrt(opts.noise_sigma2.value_or(h.sigma2));
  const double lambda_sd = std::sqrt(opts.c_sample);
  out.X.resize(h.D, n);
  out.Z.assign(static_cast<std::size_t>(n), BinaryCode(static_cast<std::size_t>(h.K), 0));
  out.lambda.resize(n);
  for (int i = 0; i < n; ++i) {
    BinaryCode& z = out.Z[static_cast<std::size_t>(i)];
    for (int k = 0; k < h.K; ++k) z[static_cast<std::size_t>(k)] = rng.bernoulli(out.pi[k]) ? 1 : 0;
    Vector xi = model.net.forward(z);
    if (opts.dirichlet_scale > 0.0) {
      Vector conc = (opts.dirichlet_scale * xi.array() + 1e-12).matrix();
      xi = rng.dirichlet(conc);
    }
    const double lambda = lambda_sd * rng.normal();
    out.lambda[i] = lambda;
    const Vector mean = lambda * (model.phi * xi);
    for (int d = 0; d < h.D; ++d) out.X(d, i) = mean[d] + noise_sd * rng.normal();
  }
  return out;
}

}  // namespace bpdc

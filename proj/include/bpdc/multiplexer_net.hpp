#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bpdc/errors.hpp"
#include "bpdc/math.hpp"
#include "bpdc/rng.hpp"

namespace bpdc {

/// Binary latent code z in {0,1}^K, one byte per bit.
using BinaryCode = std::vector<std::uint8_t>;

enum class Activation { kTanh, kRelu, kSigmoid };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "tanh";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  if (s == "sigmoid") return Activation::kSigmoid;
  throw DomainError("unknown activation '" + s + "'");
}

/// Per-layer pre-activations and activations from one forward pass.
/// act[0] is the input code as doubles; act.back() is the simplex output.
struct ForwardCache {
  std::vector<Vector> pre;
  std::vector<Vector> act;
  bool valid() const { return !act.empty() && act.size() == pre.size() + 1; }
};

/// Gradients shaped like the network parameters.
struct NetGradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

/// Dense network mapping binary codes to the probability simplex: hidden
/// layers use a fixed elementwise activation, the output layer is a softmax.
/// W_l has shape dims[l+1] x dims[l].
class MultiplexerNet {
 public:
  MultiplexerNet() = default;

  MultiplexerNet(std::vector<int> dims, Activation activation)
      : dims_(std::move(dims)), activation_(activation) {
    if (dims_.size() < 2) {
      throw ShapeError("MultiplexerNet: need at least input and output dims");
    }
    for (int d : dims_) {
      if (d < 1) throw ShapeError("MultiplexerNet: layer dims must be >= 1");
    }
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      weights_.push_back(Matrix::Zero(dims_[l + 1], dims_[l]));
      biases_.push_back(Vector::Zero(dims_[l + 1]));
    }
  }

  /// Weights ~ Normal(0, 1/fan_in), biases zero.
  static MultiplexerNet random(std::vector<int> dims, Activation activation,
                               Rng& rng) {
    MultiplexerNet net(std::move(dims), activation);
    for (auto& w : net.weights_) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(w.cols()));
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = scale * rng.normal();
      }
    }
    return net;
  }

  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  std::size_t num_layers() const { return weights_.size(); }
  const std::vector<int>& dims() const { return dims_; }
  Activation activation() const { return activation_; }

  Matrix& weight(std::size_t l) { return weights_.at(l); }
  const Matrix& weight(std::size_t l) const { return weights_.at(l); }
  Vector& bias(std::size_t l) { return biases_.at(l); }
  const Vector& bias(std::size_t l) const { return biases_.at(l); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      n += static_cast<std::size_t>(dims_[l]) * dims_[l + 1] + dims_[l + 1];
    }
    return n;
  }

  /// Simplex output for code z. The first layer sums the weight columns of
  /// the set bits instead of a full matrix-vector product.
  Vector forward(std::span<const std::uint8_t> z) const {
    check_code(z);
    Vector h = biases_[0];
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (z[k]) h += weights_[0].col(static_cast<Eigen::Index>(k));
    }
    for (std::size_t l = 1; l < weights_.size(); ++l) {
      apply_activation(h);
      h = weights_[l] * h + biases_[l];
    }
    return softmax(h);
  }

  /// Forward pass that records activations for a later backward().
  Vector forward(std::span<const std::uint8_t> z, ForwardCache& cache) const {
    check_code(z);
    cache.pre.clear();
    cache.act.clear();
    Vector a(static_cast<Eigen::Index>(z.size()));
    for (std::size_t k = 0; k < z.size(); ++k) a[static_cast<Eigen::Index>(k)] = z[k];
    cache.act.push_back(a);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Vector pre = weights_[l] * cache.act.back() + biases_[l];
      cache.pre.push_back(pre);
      if (l + 1 < weights_.size()) {
        apply_activation(pre);
        cache.act.push_back(std::move(pre));
      } else {
        cache.act.push_back(softmax(pre));
      }
    }
    return cache.act.back();
  }

  /// Reverse-mode gradients of a scalar objective given d(objective)/d(output).
  NetGradients backward(const ForwardCache& cache, const Vector& grad_out) const {
    if (!cache.valid() || cache.pre.size() != weights_.size() ||
        cache.act.front().size() != input_dim()) {
      throw StateError("MultiplexerNet::backward: no matching forward cache");
    }
    if (grad_out.size() != output_dim()) {
      throw ShapeError("MultiplexerNet::backward: grad_out has wrong length");
    }
    NetGradients g;
    g.weights.resize(weights_.size());
    g.biases.resize(weights_.size());

    // Softmax Jacobian: J^T g = p * (g - p.g)
    const Vector& p = cache.act.back();
    Vector delta = p.cwiseProduct((grad_out.array() - p.dot(grad_out)).matrix());
    for (std::size_t l = weights_.size(); l-- > 0;) {
      g.weights[l] = delta * cache.act[l].transpose();
      g.biases[l] = delta;
      if (l == 0) break;
      Vector up = weights_[l].transpose() * delta;
      delta = up.cwiseProduct(activation_derivative(cache.pre[l - 1], cache.act[l]));
    }
    return g;
  }

  /// Flattened parameter order: for each layer, W (column-major) then b.
  void pack(std::span<double> out) const {
    if (out.size() != parameter_count()) {
      throw ShapeError("MultiplexerNet::pack: size mismatch");
    }
    std::size_t o = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index i = 0; i < weights_[l].size(); ++i) out[o++] = weights_[l].data()[i];
      for (Eigen::Index i = 0; i < biases_[l].size(); ++i) out[o++] = biases_[l][i];
    }
  }

  void unpack(std::span<const double> in) {
    if (in.size() != parameter_count()) {
      throw ShapeError("MultiplexerNet::unpack: size mismatch");
    }
    std::size_t o = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index i = 0; i < weights_[l].size(); ++i) weights_[l].data()[i] = in[o++];
      for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l][i] = in[o++];
    }
  }

  static void pack_gradients(const NetGradients& g, std::span<double> out) {
    std::size_t o = 0;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < g.weights[l].size(); ++i) out[o++] = g.weights[l].data()[i];
      for (Eigen::Index i = 0; i < g.biases[l].size(); ++i) out[o++] = g.biases[l][i];
    }
  }

 private:
  void check_code(std::span<const std::uint8_t> z) const {
    if (static_cast<int>(z.size()) != input_dim()) {
      throw ShapeError("MultiplexerNet: code length " + std::to_string(z.size()) +
                       " != K = " + std::to_string(input_dim()));
    }
    for (auto bit : z) {
      if (bit > 1) throw DomainError("MultiplexerNet: code entries must be 0 or 1");
    }
  }

  void apply_activation(Vector& h) const {
    switch (activation_) {
      case Activation::kTanh: h = h.array().tanh().matrix(); break;
      case Activation::kRelu: h = h.cwiseMax(0.0); break;
      case Activation::kSigmoid:
        h = (1.0 / (1.0 + (-h.array()).exp())).matrix();
        break;
    }
  }

  Vector activation_derivative(const Vector& pre, const Vector& act) const {
    switch (activation_) {
      case Activation::kTanh: return (1.0 - act.array().square()).matrix();
      case Activation::kRelu:
        return (pre.array() > 0.0).cast<double>().matrix();
      case Activation::kSigmoid:
        return (act.array() * (1.0 - act.array())).matrix();
    }
    return Vector::Ones(pre.size());
  }

  std::vector<int> dims_;
  Activation activation_ = Activation::kTanh;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

/// ADAM moment state for a flat parameter vector.
struct AdamState {
  Vector m;
  Vector v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double stepsize = 1e-3;

  AdamState() = default;
  AdamState(std::size_t n, double rho)
      : m(Vector::Zero(static_cast<Eigen::Index>(n))),
        v(Vector::Zero(static_cast<Eigen::Index>(n))),
        stepsize(rho) {}
};

/// One bias-corrected ADAM descent step: params -= rho * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(std::span<double> params, std::span<const double> grads,
                      AdamState& state) {
  if (params.size() != grads.size() ||
      static_cast<Eigen::Index>(params.size()) != state.m.size() ||
      state.m.size() != state.v.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("adam_step: non-finite gradient at index " +
                         std::to_string(i));
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    state.m[j] = state.beta1 * state.m[j] + (1.0 - state.beta1) * grads[i];
    state.v[j] = state.beta2 * state.v[j] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[j] / c1;
    const double v_hat = state.v[j] / c2;
    params[i] -= state.stepsize * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

}  // namespace bpdc

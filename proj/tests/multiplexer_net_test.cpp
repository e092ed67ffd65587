#include <gtest/gtest.h>

#include <cmath>

#include "bpdc/multiplexer_net.hpp"
#include "bpdc/verify.hpp"

namespace bpdc {
namespace {

BinaryCode random_code(int K, Rng& rng) {
  BinaryCode z(static_cast<std::size_t>(K));
  for (auto& b : z) b = rng.bernoulli(0.5) ? 1 : 0;
  return z;
}

Activation pick_activation(int i) {
  const Activation acts[] = {Activation::kTanh, Activation::kSigmoid, Activation::kRelu};
  return acts[i % 3];
}

// Straight-line re-evaluation of the network with explicit loops.
Vector reference_forward(const MultiplexerNet& net, const BinaryCode& z) {
  std::vector<double> a(z.begin(), z.end());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Matrix& W = net.weight(l);
    const Vector& b = net.bias(l);
    std::vector<double> next(static_cast<std::size_t>(W.rows()));
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      double s = b[i];
      for (Eigen::Index j = 0; j < W.cols(); ++j) s += W(i, j) * a[static_cast<std::size_t>(j)];
      next[static_cast<std::size_t>(i)] = s;
    }
    if (l + 1 < net.num_layers()) {
      for (auto& v : next) {
        switch (net.activation()) {
          case Activation::kTanh: v = std::tanh(v); break;
          case Activation::kRelu: v = v > 0 ? v : 0; break;
          case Activation::kSigmoid: v = 1.0 / (1.0 + std::exp(-v)); break;
        }
      }
    } else {
      double top = next[0];
      for (double v : next) top = std::max(top, v);
      double sum = 0.0;
      for (auto& v : next) sum += (v = std::exp(v - top));
      for (auto& v : next) v /= sum;
    }
    a = std::move(next);
  }
  return Eigen::Map<Vector>(a.data(), static_cast<Eigen::Index>(a.size()));
}

double objective(const MultiplexerNet& net, const BinaryCode& z, const Vector& g) {
  return g.dot(net.forward(z));
}

std::vector<double> fd_gradient(MultiplexerNet net, const BinaryCode& z, const Vector& g, double h) {
  std::vector<double> theta(net.parameter_count());
  net.pack(theta);
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    net.unpack(theta);
    const double up = objective(net, z, g);
    theta[i] = saved - h;
    net.unpack(theta);
    const double down = objective(net, z, g);
    theta[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

std::vector<double> analytic_gradient(const MultiplexerNet& net, const BinaryCode& z, const Vector& g) {
  ForwardCache cache;
  net.forward(z, cache);
  std::vector<double> out(net.parameter_count());
  MultiplexerNet::pack_gradients(net.backward(cache, g), out);
  return out;
}

TEST(MultiplexerNet, ParameterCount) {
  MultiplexerNet net({5, 7, 3, 4}, Activation::kTanh);
  EXPECT_EQ(net.parameter_count(), 5u * 7 + 7 + 7 * 3 + 3 + 3 * 4 + 4);
  EXPECT_EQ(net.input_dim(), 5);
  EXPECT_EQ(net.output_dim(), 4);
  EXPECT_THROW(MultiplexerNet({5}, Activation::kTanh), ShapeError);
  EXPECT_THROW(MultiplexerNet({5, 0, 2}, Activation::kTanh), ShapeError);
}

TEST(MultiplexerNet, ZeroNetIsUniform) {
  MultiplexerNet net({6, 10, 10, 4}, Activation::kTanh);
  Rng rng(1);
  const Vector out = net.forward(random_code(6, rng));
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(out[i], 0.25);
}

TEST(MultiplexerNet, ZeroCodeWithZeroBiasIsUniform) {
  Rng rng(2);
  MultiplexerNet net = MultiplexerNet::random({6, 10, 10, 5}, Activation::kTanh, rng);
  const Vector out = net.forward(BinaryCode(6, 0));
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(out[i], 0.2, 1e-15);
}

TEST(MultiplexerNet, ForwardMatchesStraightLineEvaluation) {
  Rng rng(7);
  MultiplexerNet net = MultiplexerNet::random({6, 9, 8, 5}, Activation::kTanh, rng);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) net.bias(l)[i] = 0.3 * rng.normal();
  }
  BinaryCode e1(6, 0);
  e1[0] = 1;
  EXPECT_LE((net.forward(e1) - reference_forward(net, e1)).cwiseAbs().maxCoeff(), 1e-14);
  for (int trial = 0; trial < 50; ++trial) {
    const auto z = random_code(6, rng);
    ForwardCache cache;
    const Vector cached = net.forward(z, cache);
    const Vector ref = reference_forward(net, z);
    EXPECT_LE((net.forward(z) - ref).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((cached - ref).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(MultiplexerNet, ForwardIsPure) {
  Rng rng(3);
  MultiplexerNet net = MultiplexerNet::random({8, 16, 6}, Activation::kRelu, rng);
  const auto z = random_code(8, rng);
  const Vector a = net.forward(z);
  for (int i = 0; i < 10; ++i) {
    const Vector b = net.forward(z);
    for (Eigen::Index j = 0; j < a.size(); ++j) ASSERT_EQ(a[j], b[j]);
  }
}

TEST(MultiplexerNet, SimplexPreservation) {
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const int K = 1 + static_cast<int>(rng.uniform_index(10));
    const int M = 1 + static_cast<int>(rng.uniform_index(10));
    MultiplexerNet net =
        MultiplexerNet::random({K, 1 + static_cast<int>(rng.uniform_index(12)), M},
                               pick_activation(trial), rng);
    const Vector out = net.forward(random_code(K, rng));
    ASSERT_LE(std::abs(out.sum() - 1.0), 1e-10);
    ASSERT_TRUE((out.array() >= 0.0).all());
  }
}

TEST(MultiplexerNet, ShapeAndValueErrors) {
  MultiplexerNet net({3, 2}, Activation::kTanh);
  EXPECT_THROW(net.forward(BinaryCode(4, 0)), ShapeError);
  EXPECT_THROW(net.forward(BinaryCode{0, 2, 0}), DomainError);
}

TEST(MultiplexerNet, BackwardWithoutForwardIsStateError) {
  MultiplexerNet net({3, 4, 2}, Activation::kTanh);
  ForwardCache empty;
  EXPECT_THROW(net.backward(empty, Vector::Zero(2)), StateError);
  MultiplexerNet other({5, 4, 2}, Activation::kTanh);
  ForwardCache foreign;
  other.forward(BinaryCode(5, 1), foreign);
  EXPECT_THROW(net.backward(foreign, Vector::Zero(2)), StateError);
}

TEST(MultiplexerNet, ZeroUpstreamGivesZeroGradients) {
  Rng rng(5);
  MultiplexerNet net = MultiplexerNet::random({4, 6, 3}, Activation::kTanh, rng);
  const auto g = analytic_gradient(net, random_code(4, rng), Vector::Zero(3));
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(MultiplexerNet, SingleLayerTwoByTwoByHand) {
  // p = softmax(W[:,0] + b) for z = (1, 0); objective g.p.
  // d/dpre_0 = p0 p1 (g0 - g1), d/dpre_1 = -p0 p1 (g0 - g1); column 1 of dW is 0.
  MultiplexerNet net({2, 2}, Activation::kTanh);
  net.weight(0) << 0.5, -1.0, 0.25, 2.0;
  net.bias(0) << 0.1, -0.2;
  Vector g(2);
  g << 1.0, -2.0;
  const double p0 = 1.0 / (1.0 + std::exp(-(0.6 - 0.05)));
  const double p1 = 1.0 - p0;
  const double d0 = p0 * p1 * 3.0;
  ForwardCache cache;
  net.forward(BinaryCode{1, 0}, cache);
  const NetGradients grads = net.backward(cache, g);
  EXPECT_NEAR(grads.weights[0](0, 0), d0, 1e-15);
  EXPECT_NEAR(grads.weights[0](1, 0), -d0, 1e-15);
  EXPECT_EQ(grads.weights[0](0, 1), 0.0);
  EXPECT_EQ(grads.weights[0](1, 1), 0.0);
  EXPECT_NEAR(grads.biases[0][0], d0, 1e-15);
  EXPECT_NEAR(grads.biases[0][1], -d0, 1e-15);
}

TEST(MultiplexerNet, BackwardMatchesFiniteDifferences) {
  Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int K = 2 + static_cast<int>(rng.uniform_index(5));
    const int M = 2 + static_cast<int>(rng.uniform_index(5));
    MultiplexerNet net = MultiplexerNet::random(
        {K, 3 + static_cast<int>(rng.uniform_index(5)), 3 + static_cast<int>(rng.uniform_index(5)), M},
        trial % 3 == 2 ? Activation::kTanh : pick_activation(trial), rng);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) net.bias(l)[i] = 0.5 * rng.normal();
    }
    Vector g(M);
    for (int i = 0; i < M; ++i) g[i] = rng.normal();
    const auto z = random_code(K, rng);
    const double err =
        verify::max_gradient_rel_error(analytic_gradient(net, z, g), fd_gradient(net, z, g, 1e-6));
    worst = std::max(worst, err);
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  AdamState s(3, 1e-3);
  std::vector<double> p{1.0, -2.0, 3.0};
  const std::vector<double> g(3, 0.0);
  adam_step(p, g, s);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
  EXPECT_EQ(s.t, 1u);
}

TEST(Adam, FirstStepMovesByStepsize) {
  // m = 0.1, v = 0.001; bias-corrected both equal 1 -> step rho / (1 + eps).
  AdamState s(1, 0.001);
  std::vector<double> p{0.0};
  adam_step(p, std::vector<double>{1.0}, s);
  EXPECT_NEAR(p[0], -0.001 / (1.0 + 1e-8), 1e-18);
  EXPECT_NEAR(p[0], -0.001, 1e-10);
}

TEST(Adam, TwoStepsMatchScriptedRecurrence) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, rho = 0.01;
  const double g1 = 0.5, g2 = -1.5;
  double m = 0, v = 0, p = 2.0;
  m = b1 * m + (1 - b1) * g1;
  v = b2 * v + (1 - b2) * g1 * g1;
  p -= rho * (m / (1 - b1)) / (std::sqrt(v / (1 - b2)) + eps);
  m = b1 * m + (1 - b1) * g2;
  v = b2 * v + (1 - b2) * g2 * g2;
  p -= rho * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + eps);

  AdamState s(1, rho);
  std::vector<double> q{2.0};
  adam_step(q, std::vector<double>{g1}, s);
  adam_step(q, std::vector<double>{g2}, s);
  EXPECT_NEAR(q[0], p, 1e-15);
  EXPECT_EQ(s.t, 2u);
  EXPECT_NEAR(s.m[0], m, 1e-16);
  EXPECT_NEAR(s.v[0], v, 1e-16);
}

TEST(Adam, NonFiniteGradientIsNumericErrorWithoutMutation) {
  AdamState s(2, 1e-3);
  std::vector<double> p{1.0, 1.0};
  EXPECT_THROW(adam_step(p, std::vector<double>{0.1, std::nan("")}, s), NumericError);
  EXPECT_EQ(s.t, 0u);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_THROW(adam_step(p, std::vector<double>{0.1}, s), ShapeError);
}

}  // namespace
}  // namespace bpdc

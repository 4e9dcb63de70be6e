#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hda/adam.hpp"
#include "hda/mlp.hpp"
#include "oracles.hpp"

using namespace hda;

namespace {

Mlp single_layer(Matrix w, std::vector<double> b, Activation act = Activation::identity) {
  Mlp net;
  net.layers.push_back({std::move(w), std::move(b), act});
  return net;
}

}  // namespace

TEST(Forward, IdentityNetworkPassesInputThrough) {
  const Mlp net = single_layer({{1, 0}, {0, 1}}, {0, 0});
  const auto out = forward(net, Matrix{{0.3, 0.7}}).output;
  EXPECT_EQ(out, (Matrix{{0.3, 0.7}}));
}

TEST(Forward, ReluKillsNegatives) {
  const Mlp net = single_layer({{-1, 0}, {0, -1}}, {0, 0}, Activation::relu);
  EXPECT_EQ(forward(net, Matrix{{0.5, 0.2}}).output, (Matrix{{0, 0}}));
}

TEST(Forward, TwoLayerHandEvaluated) {
  // z1 = [1 + 2*0.5 + 0.5, -1 + 0.5 - 0.5] = [2.5, -1] -> relu [2.5, 0]
  // z2 = [2.5 + 0.1, 0.5*2.5 - 0.2] = [2.6, 1.05]
  Mlp net;
  net.layers.push_back({Matrix{{1, 2}, {-1, 1}}, {0.5, -0.5}, Activation::relu});
  net.layers.push_back({Matrix{{1, -1}, {0.5, 2}}, {0.1, -0.2}, Activation::identity});
  const auto out = forward(net, Matrix{{1.0, 0.5}}).output;
  EXPECT_NEAR(out(0, 0), 2.6, 1e-15);
  EXPECT_NEAR(out(0, 1), 1.05, 1e-15);
}

TEST(Forward, DimensionMismatchIsConfigError) {
  const Mlp net = make_mlp({3, 4, 2}, 1);
  EXPECT_THROW(forward(net, Matrix(2, 2)), ConfigError);
}

TEST(SoftmaxCrossEntropy, UniformLogits) {
  const std::vector<std::size_t> y{0};
  const auto r = softmax_cross_entropy(Matrix{{0, 0}}, y);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(r.grad(0, 0), -0.5, 1e-15);
  EXPECT_NEAR(r.grad(0, 1), 0.5, 1e-15);
}

TEST(SoftmaxCrossEntropy, SaturatedLogitsStayFinite) {
  const std::vector<std::size_t> y{0};
  const auto r = softmax_cross_entropy(Matrix{{1000, 0}}, y);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 0.0, 1e-300);
  EXPECT_TRUE(r.grad.all_finite());
}

TEST(SoftmaxCrossEntropy, MatchesFiniteDifferences) {
  Matrix logits{{1, -1}};
  const std::vector<std::size_t> y{1};
  const auto r = softmax_cross_entropy(logits, y);
  // Independent closed form: loss = log(e^1 + e^-1) - (-1)
  EXPECT_NEAR(r.loss, std::log(std::exp(1.0) + std::exp(-1.0)) + 1.0, 1e-14);
  auto loss = [&] { return softmax_cross_entropy(logits, y).loss; };
  for (std::size_t k = 0; k < 2; ++k) {
    const double num = oracle::central_difference(loss, logits.data()[k], 1e-5);
    EXPECT_TRUE(oracle::close_rel(r.grad(0, k), num)) << k << ": " << r.grad(0, k) << " vs " << num;
  }
}

TEST(SoftmaxCrossEntropy, LabelOutOfRange) {
  const std::vector<std::size_t> y{2};
  EXPECT_THROW(softmax_cross_entropy(Matrix{{0, 0}}, y), InputError);
}

TEST(SoftmaxCrossEntropy, GradientRowsSumToZero) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix logits(4, 5);
    for (double& v : logits.data()) v = d(rng);
    const std::vector<std::size_t> y{0, 1, 4, 2};
    const auto r = softmax_cross_entropy(logits, y);
    EXPECT_GE(r.loss, 0.0);
    for (std::size_t row = 0; row < 4; ++row) {
      double s = 0.0;
      for (double v : r.grad.row(row)) s += v;
      EXPECT_NEAR(s, 0.0, 1e-9);
    }
  }
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const Mlp net = make_mlp({3, 5, 2}, 7);
  Matrix x(4, 3, 0.5);
  const auto fwd = forward(net, x);
  const auto g = backward(net, fwd.cache, Matrix(4, 2));
  for (const auto& l : g.layers) {
    for (double v : l.weight.data()) EXPECT_EQ(v, 0.0);
    for (double v : l.bias) EXPECT_EQ(v, 0.0);
  }
  for (double v : g.input_grad.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, LinearInputGradientIsUpstreamTimesWeight) {
  const Mlp net = single_layer({{1, 2, 3}, {-1, 0.5, 4}}, {0, 0});
  const Matrix x{{0.1, 0.2, 0.3}};
  const Matrix up{{2, -3}};
  const auto g = backward(net, forward(net, x).cache, up);
  // up . W = [2 + 3, 4 - 1.5, 6 - 12]
  EXPECT_EQ(g.input_grad, (Matrix{{5, 2.5, -6}}));
  // dW = up^T x
  EXPECT_NEAR(g.layers[0].weight(1, 2), -3 * 0.3, 1e-15);
}

TEST(Backward, RandomTwoHiddenLayerNetMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  oracle::GradCheckInstance inst;
  inst.net = make_mlp({3, 8, 6, 3}, 5);
  for (auto& l : inst.net.layers) {
    for (double& b : l.bias) b = u(rng) - 0.5;
  }
  inst.x = Matrix(4, 3);
  for (double& v : inst.x.data()) v = u(rng);
  inst.labels = {0, 2, 1, 2};
  const auto fwd = forward(inst.net, inst.x);
  const auto ce = softmax_cross_entropy(fwd.output, inst.labels);
  const auto g = backward(inst.net, fwd.cache, ce.grad);
  EXPECT_EQ(g.input_grad.rows(), 4u);
  EXPECT_EQ(g.input_grad.cols(), 3u);
  EXPECT_EQ(oracle::count_gradient_mismatches(inst, g), 0u);
}

TEST(Backward, MismatchedCacheIsUsageError) {
  const Mlp a = make_mlp({3, 5, 2}, 1);
  const Mlp b = make_mlp({3, 4, 2}, 1);
  const auto fwd = forward(a, Matrix(2, 3, 0.1));
  EXPECT_THROW(backward(b, fwd.cache, Matrix(2, 2)), UsageError);
  EXPECT_THROW(backward(a, fwd.cache, Matrix(3, 2)), UsageError);
  EXPECT_THROW(backward(a, ForwardCache{}, Matrix(2, 2)), UsageError);
}

TEST(GradReversal, Examples) {
  EXPECT_EQ(grad_reversal(Matrix{{2, -3}}, 0.0), (Matrix{{-0.0, 0.0}}));
  EXPECT_EQ(grad_reversal(Matrix{{2, -3}}, 1.0), (Matrix{{-2, 3}}));
  EXPECT_EQ(grad_reversal(Matrix{{4}}, 0.5), (Matrix{{-2}}));
}

TEST(GradReversal, LambdaOneIsBitExactNegation) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d(0.0, 1e3);
  Matrix g(7, 9);
  for (double& v : g.data()) v = d(rng);
  const Matrix r = grad_reversal(g, 1.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(r.data()[i]), std::bit_cast<std::uint64_t>(-g.data()[i]));
  }
}

TEST(Adam, ZeroGradientLeavesParametersAndCountsStep) {
  Mlp net = make_mlp({3, 4, 2}, 9);
  const Mlp before = net;
  AdamState s = make_adam(net, 0.01);
  adam_step(net, zero_gradients(net), s);
  EXPECT_EQ(net, before);
  EXPECT_EQ(s.t, 1u);
}

TEST(Adam, FirstStepClosedForm) {
  // t=1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  std::vector<double> p{0.0};
  const std::vector<double> g{1.0};
  AdamState s = make_adam(1, 0.01);
  adam_step(p, g, s);
  EXPECT_NEAR(p[0], -0.01 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p[0], -0.01, 1e-9);
}

TEST(Adam, IdenticalParametersGetIdenticalUpdates) {
  std::vector<double> p{0.3, 0.3};
  const std::vector<double> g{-0.7, -0.7};
  AdamState s = make_adam(2, 0.01);
  for (int i = 0; i < 5; ++i) adam_step(p, g, s);
  EXPECT_EQ(p[0], p[1]);
}

TEST(Adam, ShapeMismatchIsUsageError) {
  std::vector<double> p{0.0, 1.0};
  const std::vector<double> g{1.0};
  AdamState s = make_adam(2, 0.01);
  EXPECT_THROW(adam_step(p, g, s), UsageError);
  Mlp net = make_mlp({2, 2}, 1);
  AdamState wrong = make_adam(make_mlp({2, 3, 2}, 1), 0.01);
  EXPECT_THROW(adam_step(net, zero_gradients(net), wrong), UsageError);
}

TEST(Engine, RandomNetsMatchFiniteDifferences) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = oracle::random_instance(rng);
    const auto fwd = forward(inst.net, inst.x);
    const auto g = backward(inst.net, fwd.cache, softmax_cross_entropy(fwd.output, inst.labels).grad);
    EXPECT_EQ(oracle::count_gradient_mismatches(inst, g), 0u) << "trial " << trial;
  }
}

TEST(Engine, DeterministicAcrossCalls) {
  const Mlp net = make_mlp({4, 16, 16, 3}, 42);
  EXPECT_EQ(net, make_mlp({4, 16, 16, 3}, 42));
  Matrix x(5, 4, 0.25);
  x(2, 1) = 0.9;
  const std::vector<std::size_t> y{0, 1, 2, 0, 1};
  auto run = [&] {
    const auto fwd = forward(net, x);
    return backward(net, fwd.cache, softmax_cross_entropy(fwd.output, y).grad);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.input_grad, b.input_grad);
  for (std::size_t l = 0; l < a.layers.size(); ++l) EXPECT_EQ(a.layers[l].weight, b.layers[l].weight);
}

TEST(Engine, InitializationWithinGlorotBound) {
  const Mlp net = make_mlp({10, 30}, 3);
  const double limit = std::sqrt(6.0 / 40.0);
  for (double w : net.layers[0].weight.data()) EXPECT_LE(std::abs(w), limit);
  for (double b : net.layers[0].bias) EXPECT_EQ(b, 0.0);
}

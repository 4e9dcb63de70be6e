#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hda/divergence.hpp"

using namespace hda;

namespace {

Mlp linear_net(Matrix w, std::vector<double> b) {
  Mlp net;
  net.layers.push_back({std::move(w), std::move(b), Activation::identity});
  return net;
}

LabeledDataset rotated_moons(std::size_t n, std::uint64_t seed) {
  ShiftSpec spec;
  spec.rotation = std::numbers::pi / 4.0;
  return apply_shift(gen_two_moons(n, 0.1, seed), spec);
}

HdhConfig seeded(std::uint64_t seed) {
  HdhConfig cfg;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(ProxyADistance, Endpoints) {
  EXPECT_EQ(proxy_a_distance(0.0), 2.0);
  EXPECT_EQ(proxy_a_distance(0.25), 1.0);
  EXPECT_EQ(proxy_a_distance(0.5), 0.0);
  EXPECT_EQ(proxy_a_distance(1.0), -2.0);
}

TEST(ProxyADistance, StrictlyDecreasing) {
  double prev = proxy_a_distance(0.0);
  for (int i = 1; i <= 100; ++i) {
    const double cur = proxy_a_distance(i / 100.0);
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(ProxyADistance, OutOfRangeIsInputError) {
  EXPECT_THROW(proxy_a_distance(-0.01), InputError);
  EXPECT_THROW(proxy_a_distance(1.01), InputError);
  EXPECT_THROW(proxy_a_distance(std::nan("")), InputError);
}

TEST(DomainError, ConstantSourceClassifierIsHalf) {
  const Mlp always_source = linear_net(Matrix{{0, 0}, {0, 0}}, {1, 0});
  EXPECT_EQ(domain_error(always_source, Matrix(7, 2, 0.3), Matrix(3, 2, 0.9)), 0.5);
}

TEST(DomainError, TiesGoToSource) {
  const Mlp flat = linear_net(Matrix{{0, 0}, {0, 0}}, {0, 0});
  EXPECT_EQ(domain_error(flat, Matrix(4, 2, 0.3), Matrix(4, 2, 0.9)), 0.5);
}

TEST(DomainError, PerfectClassifierIsZero) {
  // Logit for target grows with x; source rows sit below 0.5, target rows above.
  const Mlp net = linear_net(Matrix{{0}, {1}}, {0, -0.5});
  EXPECT_EQ(domain_error(net, Matrix{{0.1}, {0.2}}, Matrix{{0.8}, {0.9}, {0.7}}), 0.0);
}

TEST(DomainError, HandPlacedFourPoints) {
  // Decision: target iff x > 0.5. Source {0.2 ok, 0.7 wrong}, target {0.9 ok, 0.4 wrong}.
  const Mlp net = linear_net(Matrix{{0}, {1}}, {0, -0.5});
  EXPECT_EQ(domain_error(net, Matrix{{0.2}, {0.7}}, Matrix{{0.9}, {0.4}}), 0.5);
}

TEST(DomainError, BalancedNotPooled) {
  // One of four source rows wrong, all target rows right: balanced 0.125, pooled 0.1.
  const Mlp net = linear_net(Matrix{{0}, {1}}, {0, -0.5});
  const Matrix s{{0.1}, {0.2}, {0.3}, {0.8}};
  const Matrix t{{0.6}, {0.7}, {0.8}, {0.9}, {0.95}, {0.99}};
  EXPECT_EQ(domain_error(net, s, t), 0.125);
}

TEST(DomainError, Errors) {
  const Mlp net = linear_net(Matrix{{0}, {1}}, {0, 0});
  EXPECT_THROW(domain_error(net, Matrix(0, 1), Matrix(2, 1)), InputError);
  const Mlp three = linear_net(Matrix{{0}, {1}, {2}}, {0, 0, 0});
  EXPECT_THROW(domain_error(three, Matrix(2, 1), Matrix(2, 1)), ConfigError);
}

TEST(TrainDomainClassifier, DimensionMismatchIsConfigError) {
  EXPECT_THROW(train_domain_classifier(Matrix(10, 2), Matrix(10, 3), HdhConfig{}), ConfigError);
}

TEST(TrainDomainClassifier, InvalidConfigListsFields) {
  HdhConfig cfg;
  cfg.epochs = 0;
  cfg.learning_rate = 0.0;
  try {
    train_domain_classifier(Matrix(10, 2), Matrix(10, 2), cfg);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.violations().size(), 2u);
  }
}

TEST(TrainDomainClassifier, Deterministic) {
  const auto s = gen_two_moons(300, 0.1, 1);
  const auto t = rotated_moons(200, 2);
  EXPECT_EQ(train_domain_classifier(s, t, seeded(4)), train_domain_classifier(s, t, seeded(4)));
  EXPECT_NE(train_domain_classifier(s, t, seeded(4)), train_domain_classifier(s, t, seeded(5)));
}

TEST(EstimateDivergence, IdenticalDistributionsNearChance) {
  const auto s = gen_two_moons(1000, 0.1, 1);
  const auto t = gen_two_moons(1000, 0.1, 2);
  const auto r = estimate_divergence(s, t, seeded(0)).report;
  EXPECT_NEAR(r.domain_error, 0.5, 0.05);
  EXPECT_EQ(r.n_source, 1000u);
  EXPECT_EQ(r.n_target, 1000u);
  EXPECT_EQ(r.proxy_a_distance, proxy_a_distance(r.domain_error));
}

TEST(EstimateDivergence, SeparatedBlobsNearZeroError) {
  const auto s = gen_gaussian_blobs(400, {{0.2, 0.2}, {0.3, 0.3}}, 0.03, 1);
  const auto t = gen_gaussian_blobs(400, {{0.7, 0.7}, {0.8, 0.8}}, 0.03, 2);
  EXPECT_LE(estimate_divergence(s, t, seeded(0)).report.domain_error, 0.02);
}

TEST(EstimateDivergence, RotatedMoonsBelowPointFour) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto s = gen_two_moons(1000, 0.1, 10 + seed);
    const auto t = rotated_moons(1000, 20 + seed);
    EXPECT_LT(estimate_divergence(s, t, seeded(seed)).report.domain_error, 0.4) << "seed " << seed;
  }
}

TEST(EstimateDivergence, NullHoldsInFourOfFiveSeeds) {
  int within = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = gen_two_moons(1000, 0.1, 100 + seed);
    const auto t = gen_two_moons(1000, 0.1, 200 + seed);
    within += std::abs(estimate_divergence(s, t, seeded(seed)).report.proxy_a_distance) <= 0.2 ? 1 : 0;
  }
  EXPECT_GE(within, 4);
}

TEST(EstimateDivergence, LabelSwapSymmetry) {
  double forward_sum = 0.0, swapped_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = gen_two_moons(1000, 0.1, 30 + seed);
    const auto t = rotated_moons(1000, 40 + seed);
    forward_sum += std::abs(estimate_divergence(s, t, seeded(seed)).report.proxy_a_distance);
    swapped_sum += std::abs(estimate_divergence(t, s, seeded(seed)).report.proxy_a_distance);
  }
  EXPECT_LE(std::abs(forward_sum - swapped_sum) / 5.0, 0.1);
}

TEST(EstimateDivergence, UnequalDomainSizes) {
  const auto s = gen_two_moons(900, 0.1, 1);
  const auto t = rotated_moons(300, 2);
  const auto r = estimate_divergence(s, t, seeded(1)).report;
  EXPECT_EQ(r.n_source, 900u);
  EXPECT_EQ(r.n_target, 300u);
  EXPECT_GE(r.domain_error, 0.0);
  EXPECT_LT(r.domain_error, 0.45);
}

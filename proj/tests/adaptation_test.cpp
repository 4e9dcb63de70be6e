#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "hda/adaptation.hpp"
#include "hda/mmd.hpp"
#include "oracles.hpp"

using namespace hda;

namespace {

LabeledDataset rotated_moons(std::size_t n, std::uint64_t seed) {
  ShiftSpec spec;
  spec.rotation = std::numbers::pi / 4.0;
  return apply_shift(gen_two_moons(n, 0.1, seed), spec);
}

Matrix gaussian_rows(std::size_t n, std::size_t d, double mean, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(mean, sigma);
  Matrix m(n, d);
  for (double& v : m.data()) v = g(rng);
  return m;
}

bool same_trajectory(const SourceClassifier& a, const SourceClassifier& b) {
  return a.extractor == b.extractor && a.label_head == b.label_head;
}

SourceClassifier constant_classifier(std::size_t dim, std::size_t classes, std::size_t winner) {
  SourceClassifier f = make_source_classifier(dim, classes, 1, 4);
  for (auto& l : f.label_head.layers) {
    std::fill(l.weight.data().begin(), l.weight.data().end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  f.label_head.layers.back().bias[winner] = 1.0;
  return f;
}

DAConfig da_config(DaMethod m, std::uint64_t seed) {
  DAConfig cfg;
  cfg.method = m;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(Pretrain, SeparableBlobsReachNinetyNine) {
  const auto d = gen_gaussian_blobs(400, {{0.2, 0.2}, {0.8, 0.8}}, 0.05, 1);
  const auto f = pretrain(make_source_classifier(2, 2, 3), d, PretrainConfig{});
  EXPECT_GE(evaluate(f, d).accuracy, 0.99);
}

TEST(Pretrain, SelfAccuracyAtLeastShiftedAccuracy) {
  const auto s = gen_two_moons(1000, 0.1, 1);
  const auto t = rotated_moons(1000, 2);
  const auto f = pretrain(make_source_classifier(2, 2, 3), s, PretrainConfig{});
  EXPECT_GE(evaluate(f, s).accuracy, evaluate(f, t).accuracy);
}

TEST(Pretrain, DeterministicAndErrors) {
  const auto s = gen_two_moons(300, 0.1, 1);
  const auto a = pretrain(make_source_classifier(2, 2, 3), s, PretrainConfig{});
  const auto b = pretrain(make_source_classifier(2, 2, 3), s, PretrainConfig{});
  EXPECT_EQ(a.networks(), b.networks());
  EXPECT_THROW(pretrain(make_source_classifier(3, 2, 3), s, PretrainConfig{}), ConfigError);
  PretrainConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(pretrain(make_source_classifier(2, 2, 3), s, bad), ValidationError);
}

TEST(Mmd, MatchesBruteForceOracle) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> n_d(2, 50), k_d(1, 6);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = k_d(rng);
    const Matrix a = gaussian_rows(n_d(rng), k, 0.0, 1.0, rng());
    const Matrix b = gaussian_rows(n_d(rng), k, 0.3, 1.2, rng());
    const std::vector<double> bw{0.5, 1.0, 2.5};
    EXPECT_NEAR(mmd2(a, b, bw), oracle::brute_force_mmd2(oracle::to_rows(a), oracle::to_rows(b), bw), 1e-9);
    EXPECT_NEAR(mmd2(a, b, bw), mmd2(b, a, bw), 1e-12);
  }
}

TEST(Mmd, IdenticalSamplesMatchClosedForm) {
  // a = b: value = 2 S / (n (n - 1)) - 2 (S + n K) / n^2 with S the off-diagonal kernel sum.
  const Matrix a = gaussian_rows(25, 3, 0.5, 0.2, 9);
  const std::vector<double> bw{0.1, 0.3};
  const auto rows = oracle::to_rows(a);
  double s = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (std::size_t c = 0; c < 3; ++c) d2 += (rows[i][c] - rows[j][c]) * (rows[i][c] - rows[j][c]);
      for (double sigma : bw) s += std::exp(-d2 / (2 * sigma * sigma));
    }
  }
  const double n = 25.0, k = 2.0;
  const double expected = 2 * s / (n * (n - 1)) - 2 * (s + n * k) / (n * n);
  EXPECT_NEAR(mmd2(a, a, bw), expected, 1e-9);
  EXPECT_LT(mmd2(a, a, bw), 0.0);  // 2 (mean off-diagonal kernel - K) / n
}

TEST(Mmd, SameDistributionNearZero) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix a = gaussian_rows(200, 2, 0.5, 0.1, 2 * seed);
    const Matrix b = gaussian_rows(200, 2, 0.5, 0.1, 2 * seed + 1);
    const auto bw = median_heuristic_bandwidths(a, b, std::vector<double>{0.5, 1.0, 2.0});
    EXPECT_LE(std::abs(mmd2(a, b, bw)), 0.02) << "seed " << seed;
  }
}

TEST(Mmd, FarBlobsAtLeastHalfPerKernel) {
  const Matrix a = gaussian_rows(20, 2, 0.0, 0.1, 1);
  const Matrix b = gaussian_rows(20, 2, 5.0, 0.1, 2);
  const std::vector<double> bw{0.5, 1.0, 2.0};
  const double value = mmd2(a, b, bw);
  EXPECT_GE(value / 3.0, 0.5);
  EXPECT_NEAR(value, oracle::brute_force_mmd2(oracle::to_rows(a), oracle::to_rows(b), bw), 1e-9);
}

TEST(Mmd, GradientMatchesFiniteDifferences) {
  Matrix a = gaussian_rows(6, 3, 0.0, 1.0, 3);
  Matrix b = gaussian_rows(5, 3, 0.5, 1.0, 4);
  const std::vector<double> bw{0.7, 1.5};
  const auto r = mmd2_with_grad(a, b, bw);
  EXPECT_NEAR(r.value, mmd2(a, b, bw), 1e-15);
  auto f = [&] { return oracle::brute_force_mmd2(oracle::to_rows(a), oracle::to_rows(b), bw); };
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(oracle::close_rel(r.grad_a.data()[i], oracle::central_difference(f, a.data()[i], 1e-5))) << i;
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_TRUE(oracle::close_rel(r.grad_b.data()[i], oracle::central_difference(f, b.data()[i], 1e-5))) << i;
  }
}

TEST(Mmd, Errors) {
  const std::vector<double> bw{1.0};
  EXPECT_THROW(mmd2(Matrix(1, 2), Matrix(5, 2), bw), InputError);
  EXPECT_THROW(mmd2(Matrix(5, 2), Matrix(1, 2), bw), InputError);
  EXPECT_THROW(mmd2(Matrix(5, 2), Matrix(5, 2), std::vector<double>{0.0}), ConfigError);
  EXPECT_THROW(mmd2(Matrix(5, 2), Matrix(5, 2), std::vector<double>{}), ConfigError);
}

TEST(Mmd, MedianHeuristicFallsBackOnDegenerateSets) {
  EXPECT_EQ(median_pairwise_distance(Matrix(3, 2, 0.5), Matrix(3, 2, 0.5)), 1.0);
  const auto bw = median_heuristic_bandwidths(Matrix{{0.0}, {1.0}}, Matrix{{0.0}, {1.0}}, std::vector<double>{0.5, 2.0});
  EXPECT_EQ(bw.size(), 2u);
  EXPECT_EQ(bw[1], 4.0 * bw[0]);
}

TEST(Adapt, NoShiftTargetKeepsSourceAccuracy) {
  const auto s = gen_two_moons(600, 0.1, 1);
  const auto f0 = pretrain(make_source_classifier(2, 2, 2), s, PretrainConfig{});
  for (auto m : {DaMethod::source_only, DaMethod::dann, DaMethod::mmd}) {
    const auto f = adapt(f0, s, s.features, da_config(m, 3));
    const auto fresh = gen_two_moons(2000, 0.1, 9);
    EXPECT_NEAR(evaluate(f, fresh).accuracy, evaluate(f, s).accuracy, 0.03) << to_string(m);
  }
}

TEST(Adapt, ZeroWeightsReduceToSourceOnly) {
  const auto s = gen_two_moons(500, 0.1, 1);
  const auto t = rotated_moons(500, 2);
  const auto f0 = pretrain(make_source_classifier(2, 2, 2), s, PretrainConfig{});
  const auto base = adapt(f0, s, t.features, da_config(DaMethod::source_only, 7));
  auto dann = da_config(DaMethod::dann, 7);
  dann.lambda_domain = 0.0;
  auto mmd = da_config(DaMethod::mmd, 7);
  mmd.mmd_weight = 0.0;
  EXPECT_TRUE(same_trajectory(adapt(f0, s, t.features, dann), base));
  EXPECT_TRUE(same_trajectory(adapt(f0, s, t.features, mmd), base));
  EXPECT_FALSE(same_trajectory(adapt(f0, s, t.features, da_config(DaMethod::dann, 7)), base));
}

TEST(Adapt, DannBeatsSourceOnlyOnAverage) {
  double dann_sum = 0.0, base_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = gen_two_moons(1000, 0.1, 100 + seed);
    const auto t = rotated_moons(1000, 200 + seed);
    const auto f0 = pretrain(make_source_classifier(2, 2, seed), s, PretrainConfig{10, 0.01, 64, seed});
    base_sum += evaluate(adapt(f0, s, t.features, da_config(DaMethod::source_only, seed)), t).accuracy;
    dann_sum += evaluate(adapt(f0, s, t.features, da_config(DaMethod::dann, seed)), t).accuracy;
  }
  EXPECT_GT(dann_sum / 5.0, base_sum / 5.0);
}

TEST(Adapt, Errors) {
  const auto s = gen_two_moons(50, 0.1, 1);
  const auto f = make_source_classifier(2, 2, 1);
  EXPECT_THROW(adapt(f, s, Matrix(10, 3), DAConfig{}), ConfigError);
  EXPECT_THROW(adapt(f, s, Matrix(0, 2), DAConfig{}), InputError);
  EXPECT_THROW(da_method_from_string("cdan"), ConfigError);
  DAConfig bad;
  bad.epochs = 0;
  bad.mmd_weight = -1.0;
  try {
    adapt(f, s, s.features, bad);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.violations().size(), 2u);
  }
}

TEST(Adapt, DannLambdaRampsLinearly) {
  DAConfig cfg;
  cfg.epochs = 4;
  cfg.lambda_domain = 2.0;
  EXPECT_EQ(dann_lambda(cfg, 0), 0.5);
  EXPECT_EQ(dann_lambda(cfg, 3), 2.0);
}

TEST(Evaluate, Examples) {
  const LabeledDataset balanced{Matrix(4, 2, 0.5), {0, 1, 0, 1}, DomainTag::target, 2};
  EXPECT_EQ(evaluate(constant_classifier(2, 2, 0), balanced).accuracy, 0.5);
  const LabeledDataset ones{Matrix(3, 2, 0.5), {1, 1, 1}, DomainTag::target, 2};
  EXPECT_EQ(evaluate(constant_classifier(2, 2, 1), ones).accuracy, 1.0);

  // Hand-set logits: argmax 0, 1, 1 (tie -> 0), 2, 0; labels 0, 1, 0, 2, 1 -> row 5 wrong.
  const Matrix logits{{3, 1, 0}, {0, 2, 1}, {1, 1, 0}, {0, 0, 5}, {2, 1, 1}};
  const std::vector<std::size_t> labels{0, 1, 0, 2, 1};
  const auto acc = accuracy_from_predictions(argmax_rows(logits), labels, 3);
  EXPECT_EQ(acc.accuracy, 0.8);
  EXPECT_EQ(acc.correct, (std::vector<std::size_t>{2, 1, 1}));
  EXPECT_EQ(acc.total, (std::vector<std::size_t>{2, 2, 1}));
  EXPECT_THROW(evaluate(constant_classifier(2, 2, 0), LabeledDataset{Matrix(0, 2), {}, DomainTag::target, 2}),
               InputError);
}

TEST(Pipeline, DisabledAttackMatchesControl) {
  const auto s = gen_two_moons(400, 0.1, 1);
  const auto t = rotated_moons(400, 2);
  AttackConfig atk;
  atk.steps = 0;
  PretrainConfig pre;
  pre.epochs = 3;
  auto da = da_config(DaMethod::dann, 1);
  da.epochs = 3;
  const auto r = hda_pipeline(s, t, HdhConfig{}, atk, pre, da);
  EXPECT_EQ(r.adversarial.data.features, s.features);
  EXPECT_EQ(r.hda.model.networks(), r.baseline.model.networks());
  EXPECT_EQ(r.hda.after_adapt, r.baseline.after_adapt);
  EXPECT_EQ(r.hda.divergence, r.baseline.divergence);
}

TEST(Pipeline, DeterministicAndBlindToTargetLabels) {
  const auto s = gen_two_moons(400, 0.1, 1);
  auto t = rotated_moons(400, 2);
  PretrainConfig pre;
  pre.epochs = 3;
  auto da = da_config(DaMethod::mmd, 1);
  da.epochs = 3;
  const auto a = hda_pipeline(s, t, HdhConfig{}, AttackConfig{}, pre, da);
  const auto b = hda_pipeline(s, t, HdhConfig{}, AttackConfig{}, pre, da);
  EXPECT_EQ(a.hda.model.networks(), b.hda.model.networks());
  EXPECT_EQ(a.hda.after_adapt, b.hda.after_adapt);
  EXPECT_EQ(a.adversarial.data, b.adversarial.data);

  std::mt19937_64 rng(5);
  std::shuffle(t.labels.begin(), t.labels.end(), rng);
  const auto c = hda_pipeline(s, t, HdhConfig{}, AttackConfig{}, pre, da);
  EXPECT_EQ(c.hda.model.networks(), a.hda.model.networks());
  EXPECT_EQ(c.baseline.model.networks(), a.baseline.model.networks());
}

TEST(Pipeline, AdversarialDomainIsCloserToTarget) {
  const auto s = gen_two_moons(1000, 0.1, 1);
  const auto t = rotated_moons(1000, 2);
  const auto adv = build_adversarial_domain(s, t, HdhConfig{}, AttackConfig{});
  EXPECT_LT(adv.adversarial_vs_target.proxy_a_distance, adv.source_vs_target.proxy_a_distance);
  EXPECT_GT(adv.success_after, adv.success_before);
}

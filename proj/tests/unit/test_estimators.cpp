#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "ood/error.hpp"
#include "ood/estimators.hpp"
#include "ood/special.hpp"
#include "oracles.hpp"

using namespace ood;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Distribution normal(double var) { return Distribution::isotropic_gaussian({0.0}, var); }

void expect_within_se(const Estimate& e, double target, double k = 4.0) {
  EXPECT_LE(std::abs(e.value - target), k * e.std_error) << e.method << " value " << e.value << " se " << e.std_error;
}

void expect_bit_identical(const Estimate& a, const Estimate& b) {
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.std_error, b.std_error);
  EXPECT_EQ(a.n, b.n);
}

// Kozachenko-Leonenko restated with explicit sorting of all distances.
double kl_entropy_oracle(const Dataset& data, std::size_t k) {
  const std::size_t n = data.size(), d = data.dim();
  double sum_log = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> dist;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double s = 0;
      for (std::size_t a = 0; a < d; ++a) s += std::pow(data.row(i)[a] - data.row(j)[a], 2);
      dist.push_back(std::sqrt(s));
    }
    std::sort(dist.begin(), dist.end());
    sum_log += std::log(dist[k - 1]);
  }
  const double dd = static_cast<double>(d);
  const double log_vd = 0.5 * dd * std::log(oracle::kPi) - std::lgamma(0.5 * dd + 1);
  return oracle::digamma(static_cast<double>(n)) - oracle::digamma(static_cast<double>(k)) + log_vd +
         dd / static_cast<double>(n) * sum_log;
}

}  // namespace

TEST(MeanEstimate, StdErrorIsSampleSdOverRootN) {
  const std::vector<double> v = {1.0, 2.0, 4.0, 8.0};
  const auto e = mean_estimate(v, "fixture");
  EXPECT_NEAR(e.value, 3.75, 1e-15);
  EXPECT_NEAR(e.std_error, std::sqrt(oracle::variance(v) / 4.0), 1e-15);
  EXPECT_EQ(e.n, 4u);
  const auto bad = mean_estimate(std::vector<double>{1.0, -kInf}, "fixture");
  EXPECT_TRUE(bad.support_violation);
  EXPECT_EQ(bad.value, -kInf);
}

TEST(RunningMomentsType, MatchesTwoPass) {
  RunningMoments m;
  std::vector<double> v;
  Rng r(2);
  for (int i = 0; i < 1000; ++i) {
    v.push_back(1e6 + r.normal());
    m.push(v.back());
  }
  EXPECT_NEAR(m.mean(), oracle::mean(v), 1e-9);
  EXPECT_NEAR(m.variance(), oracle::variance(v), 1e-6);
}

TEST(CrossEntropy, SelfEqualsEntropy) {
  const auto e = mc_cross_entropy(normal(1), normal(1), 100000, 1);
  EXPECT_NEAR(0.5 * std::log(2 * oracle::kPi * std::exp(1.0)), 1.418939, 1e-6);
  expect_within_se(e, 1.418939);
  EXPECT_EQ(e.n, 100000u);
}

TEST(CrossEntropy, NormalAgainstWideNormal) {
  const double target = oracle::quad_normal_kl(0, 1, 0, 16) + oracle::quad_normal_entropy(0, 1);
  EXPECT_NEAR(target, 2.336483, 1e-6);
  expect_within_se(mc_cross_entropy(normal(1), normal(16), 100000, 2), target);
}

TEST(CrossEntropy, DisjointSupportIsFlagged) {
  const auto e = mc_cross_entropy(Distribution::uniform_box({2.0}, {3.0}), Distribution::uniform_box({0.0}, {1.0}),
                                  1000, 3);
  EXPECT_EQ(e.value, kInf);
  EXPECT_TRUE(e.support_violation);
}

TEST(CrossEntropy, DatasetUsesEveryPoint) {
  const Dataset d(1, Measure::lebesgue, {0.0, 1.0, -2.0}, {"fixture", 0, "none"});
  const auto e = mc_cross_entropy(d, normal(1));
  const double target =
      -(oracle::normal_logpdf(0, 0, 1) + oracle::normal_logpdf(1, 0, 1) + oracle::normal_logpdf(-2, 0, 1)) / 3;
  EXPECT_NEAR(e.value, target, 1e-12);
  EXPECT_EQ(e.n, 3u);
  EXPECT_THROW(mc_cross_entropy(Dataset::empty(1, Measure::lebesgue), normal(1)), Error);
}

TEST(CrossEntropy, Preconditions) {
  EXPECT_THROW(mc_cross_entropy(normal(1), normal(1), 1, 0), Error);
  EXPECT_THROW(mc_cross_entropy(normal(1), Distribution::isotropic_gaussian({0.0, 0.0}, 1.0), 10, 0), Error);
}

TEST(Entropy, MonteCarloExamples) {
  expect_within_se(mc_entropy(normal(1), 100000, 4), 1.418939);
  const double mix_target = oracle::quad_mixture_entropy({0.5, 0.5}, {-5, 5}, {1, 1}, -20, 20);
  EXPECT_NEAR(mix_target, std::log(2.0) + 0.5 * std::log(2 * oracle::kPi * std::exp(1.0)), 1e-5);
  EXPECT_NEAR(mix_target, 2.112086, 1e-5);
  const auto mix = Distribution::gaussian_mixture(
      {0.5, 0.5}, {Gaussian::isotropic({-5.0}, 1.0), Gaussian::isotropic({5.0}, 1.0)});
  expect_within_se(mc_entropy(mix, 100000, 5), mix_target);
  const auto u = mc_entropy(Distribution::uniform_box({0.0}, {1.0}), 1000, 6);
  EXPECT_EQ(u.value, 0.0);
  EXPECT_EQ(u.std_error, 0.0);
}

TEST(Kl, MonteCarloExamples) {
  const auto self = mc_kl(normal(1), normal(1), 1000, 7);
  EXPECT_EQ(self.value, 0.0);
  const double target = oracle::quad_normal_kl(0, 1, 0, 16);
  EXPECT_NEAR(target, 0.917544, 1e-6);
  expect_within_se(mc_kl(normal(1), normal(16), 100000, 8), target);
  EXPECT_THROW(mc_kl(normal(1), Distribution::isotropic_gaussian({0.0, 0.0}, 1.0), 100, 0), Error);
  const auto viol = mc_kl(Distribution::uniform_box({0.0}, {2.0}), Distribution::uniform_box({0.0}, {1.0}), 100, 1);
  EXPECT_EQ(viol.value, kInf);
  EXPECT_TRUE(viol.support_violation);
}

TEST(Kl, UnbiasedOverSeeds) {
  const double target = oracle::quad_normal_kl(0, 1, 0, 16);
  RunningMoments values;
  double var_sum = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto e = mc_kl(normal(1), normal(16), 1000, 1000 + s);
    values.push(e.value);
    var_sum += e.std_error * e.std_error;
  }
  const double pooled_se = std::sqrt(var_sum) / 100.0;
  EXPECT_LE(std::abs(values.mean() - target), 4 * pooled_se);
}

TEST(Kl, ClosureWithCrossEntropy) {
  const std::vector<std::pair<Distribution, Distribution>> pairs = {
      {normal(1), normal(16)},
      {Distribution::diagonal_gaussian({1.0, 0.0}, {0.5, 2.0}), Distribution::isotropic_gaussian({0.0, 0.0}, 1.0)},
      {Distribution::categorical_product({{0.5, 0.5}, {0.2, 0.8}}),
       Distribution::categorical_product({{0.25, 0.75}, {0.5, 0.5}})},
      {Distribution::uniform_box({0.0}, {1.0}), Distribution::uniform_box({-1.0}, {2.0})},
  };
  for (const auto& [q, p] : pairs) {
    const auto cross = mc_cross_entropy(q, p, 50000, 11);
    const auto kl = mc_kl(q, p, 50000, 12);
    const auto h = mc_entropy(q, 50000, 13);
    const double se = std::sqrt(cross.std_error * cross.std_error + kl.std_error * kl.std_error +
                                h.std_error * h.std_error);
    EXPECT_LE(std::abs(cross.value - kl.value - h.value), std::max(4 * se, 1e-12)) << q.describe();
  }
}

TEST(Estimators, WorkerCountInvariant) {
  const auto q = Distribution::diagonal_gaussian({0.0, 1.0}, {1.0, 2.0});
  const auto p = Distribution::isotropic_gaussian({0.0, 0.0}, 3.0);
  const std::size_t n = 3 * kBlockSize + 17;
  const auto ref_c = mc_cross_entropy(q, p, n, 21, Exec{1});
  const auto ref_k = mc_kl(q, p, n, 21, Exec{1});
  const auto ref_h = mc_entropy(q, n, 21, Exec{1});
  const auto data = sample(q, 3000, 5);
  const auto ref_knn = knn_entropy(data, {3, 50, 9}, Exec{1});
  for (std::size_t w : {2u, 8u}) {
    expect_bit_identical(ref_c, mc_cross_entropy(q, p, n, 21, Exec{w}));
    expect_bit_identical(ref_k, mc_kl(q, p, n, 21, Exec{w}));
    expect_bit_identical(ref_h, mc_entropy(q, n, 21, Exec{w}));
    expect_bit_identical(ref_knn, knn_entropy(data, {3, 50, 9}, Exec{w}));
  }
}

TEST(Digamma, MatchesBoost) {
  for (double x : {1e-3, 0.5, 1.0, 2.5, 9.99, 10.0, 123.4, 1e4, 1e9})
    EXPECT_NEAR(digamma(x), oracle::digamma(x), 1e-12 * std::max(1.0, std::abs(oracle::digamma(x)))) << x;
}

TEST(UnitBall, LogVolume) {
  EXPECT_NEAR(log_unit_ball_volume(1), std::log(2.0), 1e-14);
  EXPECT_NEAR(log_unit_ball_volume(2), std::log(oracle::kPi), 1e-14);
  EXPECT_NEAR(log_unit_ball_volume(3), std::log(4.0 / 3.0 * oracle::kPi), 1e-14);
}

TEST(Knn, MatchesDirectFormula) {
  for (std::size_t d : {1u, 3u}) {
    const auto data = sample(Distribution::isotropic_gaussian(std::vector<double>(d, 0.0), 2.0), 300, 40 + d);
    for (std::size_t k : {1u, 3u, 5u})
      EXPECT_NEAR(knn_entropy(data, {k, 0, 1}).value, kl_entropy_oracle(data, k), 1e-10) << "d=" << d << " k=" << k;
  }
}

TEST(Knn, StandardNormalAndUniformSquare) {
  const auto n01 = sample(normal(1), 10000, 1);
  EXPECT_NEAR(knn_entropy(n01, {3, 200, 1}, Exec{4}).value, 1.418939, 0.05);
  const auto u2 = sample(Distribution::uniform_box({0.0, 0.0}, {1.0, 1.0}), 10000, 2);
  const auto e = knn_entropy(u2, {3, 200, 2}, Exec{4});
  EXPECT_NEAR(e.value, 0.0, 0.05);
  EXPECT_GT(e.std_error, 0.0);
  EXPECT_EQ(e.method, "kozachenko-leonenko(k=3,bootstrap=200)");
}

TEST(Knn, Preconditions) {
  const auto small = sample(normal(1), 3, 1);
  EXPECT_THROW(knn_entropy(small, {5, 10, 0}), Error);
  EXPECT_THROW(knn_entropy(small, {3, 10, 0}), Error);
  EXPECT_THROW(knn_entropy(Dataset(1, Measure::counting, {0, 1, 2, 3, 4}, {}), {1, 0, 0}), Error);
}

TEST(Knn, DuplicatesAreJittered) {
  std::vector<double> v;
  const auto base = sample(normal(1), 500, 3);
  v.assign(base.values().begin(), base.values().end());
  v.insert(v.end(), base.values().begin(), base.values().begin() + 50);
  const Dataset dup(1, Measure::lebesgue, v, {"dup", 0, "none"});
  const auto e = knn_entropy(dup, {3, 20, 4});
  EXPECT_TRUE(std::isfinite(e.value));
  EXPECT_NE(e.method.find("jitter"), std::string::npos);
  EXPECT_EQ(knn_entropy(base, {3, 20, 4}).method.find("jitter"), std::string::npos);
}

TEST(Knn, ErrorShrinksWithSampleSize) {
  for (std::size_t d : {1u, 2u, 4u, 8u}) {
    const auto dist = Distribution::isotropic_gaussian(std::vector<double>(d, 0.0), 1.0);
    const double h = analytic_entropy(dist);
    std::vector<double> err;
    for (std::size_t n : {100u, 1000u, 10000u}) {
      double total = 0;
      for (std::uint64_t s = 0; s < 3; ++s)
        total += std::abs(knn_entropy(sample(dist, n, 500 + s), {3, 0, s}, Exec{8}).value - h);
      err.push_back(total / 3);
    }
    EXPECT_LE(err[1], err[0] + 0.05) << "d=" << d;
    EXPECT_LE(err[2], err[1] + 0.02) << "d=" << d;
    EXPECT_LT(err[2], 0.1) << "d=" << d;
  }
}

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace bayesrank;

TEST(ExpectedImprovement, Examples) {
  EXPECT_NEAR(expected_improvement(0.3, 1.0, 0.3), 0.398942280401, 1e-12);
  EXPECT_EQ(expected_improvement(0.2, 0.0, 0.5), 0.0);
  EXPECT_EQ(expected_improvement(0.5, 0.0, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(expected_improvement(1.5, 1e-13, 0.5), 1.0);
}

TEST(ExpectedImprovement, Errors) {
  try {
    expected_improvement(0.0, -1.0, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::negative_sigma);
  }
  EXPECT_THROW(expected_improvement(std::nan(""), 1.0, 0.0), Error);
}

TEST(ExpectedImprovement, SignMatchesMaximization) {
  // A mean well above the incumbent must be worth more than one well below.
  EXPECT_GT(expected_improvement(2.0, 0.5, 0.0), expected_improvement(-2.0, 0.5, 0.0));
  EXPECT_NEAR(expected_improvement(10.0, 0.1, 0.0), 10.0, 1e-9);
}

TEST(ExpectedImprovement, NormalCdfTail) {
  EXPECT_NEAR(normal_cdf(0.0), 0.5, 1e-15);
  EXPECT_NEAR(normal_cdf(1.959963984540054), 0.975, 1e-12);
  EXPECT_NEAR(normal_cdf(-10.0) / 7.61985302416e-24, 1.0, 1e-9);
}

TEST(ExpectedImprovement, PropertiesOnRandomInputs) {
  Rng rng(9);
  for (int t = 0; t < 2000; ++t) {
    const double mu = rng.uniform(-3, 3);
    const double sigma = rng.uniform(0, 2);
    const double best = rng.uniform(-3, 3);
    const double ei = expected_improvement(mu, sigma, best);
    EXPECT_GE(ei, 0.0);
    EXPECT_TRUE(std::isfinite(ei));
    EXPECT_LE(ei, expected_improvement(mu + 0.1, sigma, best) + 1e-15);
    if (mu <= best) EXPECT_LE(ei, expected_improvement(mu, sigma + 0.1, best) + 1e-15);
    const double c = rng.uniform(-2, 2);
    EXPECT_NEAR(ei, expected_improvement(mu + c, sigma, best + c), 1e-12);
  }
}

TEST(ExpectedImprovement, MonteCarloSmall) {
  Rng rng(10);
  for (int t = 0; t < 5; ++t) {
    const double mu = rng.uniform(-1, 1);
    const double sigma = rng.uniform(0.1, 1.5);
    const double best = rng.uniform(-1, 1);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) sum += std::max(rng.normal(mu, sigma) - best, 0.0);
    EXPECT_NEAR(sum / n, expected_improvement(mu, sigma, best), 8e-3);
  }
}

TEST(TopK, Examples) {
  const std::vector<AcquisitionValue> a{{0, 0.1}, {1, 0.5}, {2, 0.3}};
  EXPECT_EQ(top_k(a, 2), (std::vector<std::size_t>{1, 2}));
  const std::vector<AcquisitionValue> eq{{0, 0.2}, {1, 0.2}, {2, 0.2}};
  EXPECT_EQ(top_k(eq, 2), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(top_k(a, 10), (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_TRUE(top_k(std::vector<AcquisitionValue>{}, 3).empty());
}

TEST(TopK, TiesBrokenByCandidateIndexNotPosition) {
  const std::vector<AcquisitionValue> a{{7, 0.4}, {3, 0.4}, {5, 0.9}};
  EXPECT_EQ(top_k(a, 3), (std::vector<std::size_t>{5, 3, 7}));
}

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace bayesrank;

namespace {

struct System {
  Eigen::MatrixXd k_obs;
  Eigen::MatrixXd k_cross;
  Eigen::VectorXd prior;
  std::vector<double> values;
};

/// RBF kernel over random points, observed block plus query block.
System random_system(Rng& rng, int n, int q) {
  const int total = n + q;
  const int dim = 3;
  std::vector<std::vector<double>> pts(static_cast<std::size_t>(total), std::vector<double>(dim));
  for (auto& p : pts) {
    for (double& x : p) x = rng.uniform(-1.0, 1.0);
  }
  const double w = rng.uniform(0.3, 1.5);
  auto k = [&](int i, int j) {
    double d2 = 0.0;
    for (int d = 0; d < dim; ++d) d2 += (pts[i][d] - pts[j][d]) * (pts[i][d] - pts[j][d]);
    return std::exp(-d2 / (2 * w * w));
  };
  System s{Eigen::MatrixXd(n, n), Eigen::MatrixXd(n, q), Eigen::VectorXd(q), std::vector<double>(n)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) s.k_obs(i, j) = k(i, j);
    for (int j = 0; j < q; ++j) s.k_cross(i, j) = k(i, n + j);
    s.values[i] = rng.normal();
  }
  for (int j = 0; j < q; ++j) s.prior(j) = 1.0;
  return s;
}

oracle::Matrix to_rows(const Eigen::MatrixXd& m) {
  oracle::Matrix out(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

}  // namespace

TEST(NormalizeScores, Examples) {
  const std::vector<double> flat{1, 1, 1};
  const auto a = normalize_scores(flat);
  EXPECT_TRUE(a.degenerate);
  EXPECT_EQ(a.values, (std::vector<double>{0, 0, 0}));

  const std::vector<double> pair{0, 2};
  const auto b = normalize_scores(pair);
  EXPECT_FALSE(b.degenerate);
  EXPECT_DOUBLE_EQ(b.values[0], -1.0);
  EXPECT_DOUBLE_EQ(b.values[1], 1.0);

  const std::vector<double> three{3, 5, 10};
  const auto c = normalize_scores(three);
  const double sd = std::sqrt(((9.0 + 1.0 + 16.0) / 3.0));
  EXPECT_DOUBLE_EQ(c.mean, 6.0);
  EXPECT_NEAR(c.std, 2.94392028877, 1e-10);
  EXPECT_NEAR(c.values[0], -3.0 / sd, 1e-12);
  EXPECT_NEAR(c.values[1], -1.0 / sd, 1e-12);
  EXPECT_NEAR(c.values[2], 4.0 / sd, 1e-12);

  EXPECT_THROW(normalize_scores(std::vector<double>{}), Error);
}

TEST(NormalizeScores, UnitMomentsOnRandomLists) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(2 + rng.below(40));
    for (double& x : v) x = rng.normal(5.0, 3.0);
    const auto ns = normalize_scores(v);
    double m = 0.0;
    double s = 0.0;
    for (double x : ns.values) m += x;
    m /= static_cast<double>(v.size());
    for (double x : ns.values) s += (x - m) * (x - m);
    EXPECT_NEAR(m, 0.0, 1e-9);
    EXPECT_NEAR(s / static_cast<double>(v.size()), 1.0, 1e-9);
  }
}

TEST(Posterior, SingleObservationInterpolates) {
  const std::vector<int> keys{0};
  const std::vector<double> f{1.2};
  const auto p = posterior(keys, keys, std::span<const double>(f), [](int, int) { return 1.0; }, 0.0);
  EXPECT_DOUBLE_EQ(p.mean[0], 1.2);
  EXPECT_DOUBLE_EQ(p.variance[0], 0.0);
}

TEST(Posterior, IndependentQueryRecoversPrior) {
  const std::vector<int> obs{0, 1};
  const std::vector<int> query{2};
  const std::vector<double> f{0.7, -0.3};
  auto kernel = [](int a, int b) {
    if (a == b) return 1.0;
    if (a == 2 || b == 2) return 0.0;
    return 0.4;
  };
  const auto p = posterior(query, obs, std::span<const double>(f), kernel, 1e-6);
  EXPECT_DOUBLE_EQ(p.mean[0], 0.0);
  EXPECT_DOUBLE_EQ(p.variance[0], 1.0 + 1e-6);
}

TEST(Posterior, HandBuiltTwoByTwo) {
  // K = [[1, .5], [.5, 1]], K^-1 = (4/3) [[1, -.5], [-.5, 1]], f = [1, -1],
  // k* = [.8, .2]: K^-1 f = [2, -2], mu = 1.2;
  // K^-1 k* = (4/3)[.7, -.2], k*' K^-1 k* = (4/3)(.56 - .04) = 0.693333...
  Eigen::MatrixXd k(2, 2);
  k << 1.0, 0.5, 0.5, 1.0;
  Eigen::MatrixXd cross(2, 1);
  cross << 0.8, 0.2;
  Eigen::VectorXd prior(1);
  prior << 1.0;
  const std::vector<double> f{1.0, -1.0};
  const auto p = posterior(k, cross, prior, f, 0.0);
  EXPECT_NEAR(p.mean[0], 1.2, 1e-12);
  EXPECT_NEAR(p.variance[0], 1.0 - 0.52 * 4.0 / 3.0, 1e-12);
}

TEST(Posterior, MatchesDirectInversionOracle) {
  Rng rng(17);
  for (int t = 0; t < 40; ++t) {
    const int n = 2 + static_cast<int>(rng.below(49));
    const auto s = random_system(rng, n, 5);
    const auto p = posterior(s.k_obs, s.k_cross, s.prior, s.values, 1e-6);
    ASSERT_EQ(p.noise, 1e-6);
    const auto rows = to_rows(s.k_obs);
    for (int j = 0; j < 5; ++j) {
      std::vector<double> cross(n);
      for (int i = 0; i < n; ++i) cross[i] = s.k_cross(i, j);
      const auto [mu, var] = oracle::gp_posterior(rows, cross, 1.0, s.values, 1e-6);
      EXPECT_NEAR(p.mean[j], mu, 1e-8);
      EXPECT_NEAR(p.variance[j], std::max(var, 0.0), 1e-8);
    }
  }
}

TEST(Posterior, VarianceBoundedByPriorAndShrinksWithData) {
  Rng rng(23);
  for (int t = 0; t < 20; ++t) {
    const auto s = random_system(rng, 20, 6);
    double prev_max = 0.0;
    std::vector<double> prev(6, 2.0);
    for (int n = 1; n <= 20; ++n) {
      const Eigen::MatrixXd k = s.k_obs.topLeftCorner(n, n);
      const Eigen::MatrixXd c = s.k_cross.topRows(n);
      const std::vector<double> f(s.values.begin(), s.values.begin() + n);
      const auto p = posterior(k, c, s.prior, f, 1e-6);
      for (int j = 0; j < 6; ++j) {
        EXPECT_LE(p.variance[j], 1.0 + 1e-6 + 1e-9);
        EXPECT_LE(p.variance[j], prev[j] + 1e-9);
        prev[j] = p.variance[j];
      }
      prev_max = std::max(prev_max, p.variance[0]);
    }
  }
}

TEST(Posterior, MeanIsLinearInValues) {
  Rng rng(5);
  const auto s = random_system(rng, 15, 4);
  std::vector<double> scaled = s.values;
  for (double& v : scaled) v *= -2.5;
  const auto a = posterior(s.k_obs, s.k_cross, s.prior, s.values, 1e-6);
  const auto b = posterior(s.k_obs, s.k_cross, s.prior, scaled, 1e-6);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(b.mean[j], -2.5 * a.mean[j], 1e-12);
}

TEST(Posterior, NoiselessInterpolation) {
  Rng rng(6);
  const auto s = random_system(rng, 8, 1);
  const auto p = posterior(s.k_obs, s.k_obs, Eigen::VectorXd::Ones(8), s.values, 0.0);
  for (int i = 0; i < 8; ++i) EXPECT_NEAR(p.mean[i], s.values[i], 1e-6);
}

TEST(Posterior, JitterEscalatesOnDuplicates) {
  const Eigen::MatrixXd k = Eigen::MatrixXd::Ones(4, 4);
  const Eigen::MatrixXd c = Eigen::MatrixXd::Ones(4, 1);
  const std::vector<double> f{1, 1, 1, 1};
  const auto p = posterior(k, c, Eigen::VectorXd::Ones(1), f, 0.0);
  EXPECT_GT(p.noise, 0.0);
  EXPECT_LE(p.noise, kMaxEscalatedNoise);
  EXPECT_NEAR(p.mean[0], 1.0, 1e-6);
}

TEST(Posterior, NotPositiveDefiniteAfterEscalation) {
  Eigen::MatrixXd k(2, 2);
  k << 1.0, 3.0, 3.0, 1.0;  // indefinite
  const Eigen::MatrixXd c = Eigen::MatrixXd::Ones(2, 1);
  const std::vector<double> f{1, 2};
  try {
    posterior(k, c, Eigen::VectorXd::Ones(1), f, 1e-6);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_positive_definite);
  }
}

TEST(Posterior, ShapeMismatch) {
  const Eigen::MatrixXd k = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd c = Eigen::MatrixXd::Ones(3, 1);
  const std::vector<double> f{1, 2};
  try {
    posterior(k, c, Eigen::VectorXd::Ones(1), f, 1e-6);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape_mismatch);
  }
}

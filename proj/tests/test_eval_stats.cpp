#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace bayesrank;

namespace {

QualityCostCurve curve(std::vector<std::size_t> budgets, std::vector<double> means) {
  QualityCostCurve c;
  c.budgets = std::move(budgets);
  c.mean_scores = std::move(means);
  return c;
}

/// Scorer with the same value everywhere.
class ConstantScorer final : public Scorer {
 public:
  const std::string& name() const override { return name_; }
  ScorerKind kind() const override { return ScorerKind::synthetic; }
  CostLabel cost() const override { return CostLabel::expensive; }
  double score(const Instance&, std::size_t) override { return 0.25; }

 private:
  std::string name_ = "flat";
};

/// t statistic from its definition, independent of the library.
double reference_t(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += (a[i] - b[i]) / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += std::pow(a[i] - b[i] - mean, 2);
  return mean / std::sqrt(ss / (n - 1.0) / n);
}

}  // namespace

TEST(Curve, SingleInstance) {
  const std::vector<std::vector<double>> t{{0.5, 0.7, 0.7}};
  const std::vector<std::size_t> b{1, 2, 3};
  EXPECT_EQ(build_curve(t, b).mean_scores, (std::vector<double>{0.5, 0.7, 0.7}));
}

TEST(Curve, BudgetBeyondTrajectoryCarriesLastValue) {
  const std::vector<std::vector<double>> t{{0.5, 0.7}};
  const std::vector<std::size_t> b{1, 5, 100};
  EXPECT_EQ(build_curve(t, b).mean_scores, (std::vector<double>{0.5, 0.7, 0.7}));
}

TEST(Curve, TwoInstancesHandAverages) {
  const std::vector<std::vector<double>> t{{0.2, 0.6}, {0.4, 0.4, 0.9}};
  const std::vector<std::size_t> b{1, 2, 3};
  const std::vector<double> best{0.6, 1.0};
  const auto c = build_curve(t, b, &best);
  ASSERT_EQ(c.mean_scores.size(), 3u);
  EXPECT_NEAR(c.mean_scores[0], 0.3, 1e-15);
  EXPECT_NEAR(c.mean_scores[1], 0.5, 1e-15);
  EXPECT_NEAR(c.mean_scores[2], 0.75, 1e-15);
  EXPECT_EQ(require_pct_best(c), (std::vector<double>{0.0, 0.5, 0.5}));
}

TEST(Curve, Errors) {
  const std::vector<std::vector<double>> t{{0.5}};
  const std::vector<std::size_t> unsorted{2, 1};
  EXPECT_THROW(build_curve(t, unsorted), Error);
  const std::vector<std::size_t> b{1};
  const std::vector<double> wrong{1.0, 2.0};
  EXPECT_THROW(build_curve(t, b, &wrong), Error);
  try {
    require_pct_best(build_curve(t, b));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_exhaustive_reference);
  }
}

TEST(Auc, ConstantCurve) {
  const auto budgets = default_budget_grid();
  EXPECT_NEAR(normalized_auc(curve(budgets, std::vector<double>(budgets.size(), 0.82))), 0.82, 1e-12);
}

TEST(Auc, LinearCurveIsTriangle) {
  std::vector<std::size_t> b;
  std::vector<double> m;
  for (std::size_t v = 0; v <= 100; v += 10) {
    b.push_back(v);
    m.push_back(static_cast<double>(v) / 100.0);
  }
  EXPECT_NEAR(normalized_auc(curve(b, m)), 0.5, 1e-12);
}

TEST(Auc, ThreePointHandTrapezoid) {
  // 10 * (0.2 + 0.6) / 2 + 20 * (0.6 + 0.7) / 2 = 17 over a span of 30.
  EXPECT_NEAR(normalized_auc(curve({10, 20, 40}, {0.2, 0.6, 0.7})), 17.0 / 30.0, 1e-12);
  EXPECT_THROW(normalized_auc(curve({10}, {0.2})), Error);
}

TEST(TTest, ZeroVarianceIsFlagged) {
  const std::vector<double> a{0.1, 0.2, 0.3};
  const auto r = paired_t_one_sided(a, a);
  EXPECT_TRUE(r.zero_variance);
  EXPECT_TRUE(std::isnan(r.p_value));
  EXPECT_TRUE(r.to_json()["p_value"].is_null());
  EXPECT_EQ(significance_cell(a, a), "tie");
}

TEST(TTest, UniformImprovement) {
  std::vector<double> a;
  std::vector<double> b;
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    b.push_back(rng.uniform());
    a.push_back(b.back() + 1.0 + 1e-6 * rng.normal());
  }
  EXPECT_LT(paired_t_one_sided(a, b).p_value, 1e-6);
  EXPECT_EQ(significance_cell(a, b), "better");
  EXPECT_EQ(significance_cell(b, a), "worse");
}

TEST(TTest, EightPairSampleMatchesNumericalIntegration) {
  const std::vector<double> a{0.81, 0.77, 0.92, 0.68, 0.85, 0.79, 0.88, 0.74};
  const std::vector<double> b{0.78, 0.79, 0.86, 0.66, 0.80, 0.80, 0.83, 0.70};
  const auto r = paired_t_one_sided(a, b);
  const double t = reference_t(a, b);
  EXPECT_NEAR(r.t_statistic, t, 1e-12);
  EXPECT_NEAR(r.p_value, oracle::t_upper_tail(t, 7.0), 1e-6);
  EXPECT_EQ(r.n_pairs, 8u);
}

TEST(TTest, Errors) {
  const std::vector<double> a{1.0, 2.0};
  const std::vector<double> b{1.0};
  EXPECT_THROW(paired_t_one_sided(a, b), Error);
  EXPECT_THROW(paired_t_one_sided(b, b), Error);
}

TEST(TTest, SwappingArgumentsNegatesStatistic) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(12);
    std::vector<double> b(12);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const auto ab = paired_t_one_sided(a, b);
    const auto ba = paired_t_one_sided(b, a);
    EXPECT_NEAR(ab.t_statistic, -ba.t_statistic, 1e-12);
    EXPECT_NEAR(ab.p_value + ba.p_value, 1.0, 1e-12);
  }
}

TEST(TTest, InvariantUnderPairPermutation) {
  Rng rng(5);
  std::vector<double> a(15);
  std::vector<double> b(15);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  const auto ref = paired_t_one_sided(a, b);
  const auto perm = rng.permutation(15);
  std::vector<double> pa;
  std::vector<double> pb;
  for (std::size_t i : perm) {
    pa.push_back(a[i]);
    pb.push_back(b[i]);
  }
  const auto got = paired_t_one_sided(pa, pb);
  EXPECT_NEAR(got.t_statistic, ref.t_statistic, 1e-12);
  EXPECT_NEAR(got.p_value, ref.p_value, 1e-12);
}

TEST(StudentT, TailAgainstNumericalIntegration) {
  for (double nu : {1.0, 2.0, 5.0, 30.0, 499.0}) {
    for (double t : {-3.0, -0.5, 0.0, 0.7, 2.0, 4.5}) {
      EXPECT_NEAR(student_t_upper_tail(t, nu), oracle::t_upper_tail(t, nu), 1e-8) << nu << " " << t;
    }
  }
  // Cauchy closed form: P(T > 1) = 1/4.
  EXPECT_NEAR(student_t_upper_tail(1.0, 1.0), 0.25, 1e-14);
  EXPECT_NEAR(student_t_cdf(0.0, 9.0), 0.5, 1e-15);
}

TEST(Kendall, PerfectConcordanceAndDiscordance) {
  const std::vector<double> a{0.3, 0.1, 0.9, 0.5, 0.7, 0.2};
  EXPECT_NEAR(kendall_tau_c(a, a), 1.0, 1e-15);
  std::vector<double> rev;
  for (double v : a) rev.push_back(-v);
  EXPECT_NEAR(kendall_tau_c(a, rev), -1.0, 1e-15);
}

TEST(Kendall, SixElementsWithTiesMatchesPairCount) {
  const std::vector<double> a{1, 2, 2, 3, 4, 4};
  const std::vector<double> b{2, 1, 3, 3, 5, 4};
  EXPECT_NEAR(kendall_tau_c(a, b), oracle::kendall_tau_c(a, b), 1e-15);
}

TEST(Kendall, RandomListsWithTiesMatchPairCount) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    std::vector<double> a(n);
    std::vector<double> b(n);
    for (auto& v : a) v = static_cast<double>(rng.below(5));
    for (auto& v : b) v = static_cast<double>(rng.below(7));
    a[0] = 0;
    a[1] = 1;
    b[0] = 0;
    b[1] = 1;
    EXPECT_NEAR(kendall_tau_c(a, b), oracle::kendall_tau_c(a, b), 1e-12);
  }
}

TEST(Kendall, Errors) {
  const std::vector<double> a{1.0, 1.0, 1.0};
  const std::vector<double> b{1.0, 2.0, 3.0};
  EXPECT_THROW(kendall_tau_c(a, b), Error);
  EXPECT_THROW(kendall_tau_c(std::vector<double>{1.0}, std::vector<double>{1.0}), Error);
  EXPECT_THROW(kendall_tau_c(b, std::vector<double>{1.0, 2.0}), Error);
}

TEST(Tuning, SingleValueGrid) {
  const auto dev = testutil::synthetic(5, 30, 61);
  SyntheticScorer s;
  RerankConfig cfg;
  cfg.budget_n = 10;
  const std::vector<double> grid{0.7};
  EXPECT_EQ(tune_bandwidth(dev, s, grid, cfg).bandwidth, 0.7);
}

TEST(Tuning, TiesGoToSmallerBandwidth) {
  const auto dev = testutil::synthetic(5, 30, 62);
  ConstantScorer s;
  RerankConfig cfg;
  cfg.budget_n = 10;
  const std::vector<double> grid{2.0, 0.5};
  const auto t = tune_bandwidth(dev, s, grid, cfg);
  EXPECT_EQ(t.bandwidth, 0.5);
  EXPECT_EQ(t.grid, (std::vector<double>{0.5, 2.0}));
  EXPECT_EQ(t.mean_scores[0], t.mean_scores[1]);
}

TEST(Tuning, ChoiceIsNearBruteForceSweepOptimum) {
  const auto dev = testutil::synthetic(60, 100, 63);
  SyntheticScorer s;
  RerankConfig cfg;
  cfg.budget_n = 20;
  const auto grid = default_bandwidth_grid();
  const auto tuned = tune_bandwidth(dev, s, grid, cfg);

  const std::vector<double> fine{0.05, 0.075, 0.1, 0.15, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0};
  double best_w = 0.0;
  double best_mean = -1e300;
  for (double w : fine) {
    RerankConfig c = cfg;
    c.bandwidth = w;
    double sum = 0.0;
    for (const auto& inst : dev.instances) sum += bayesopt_rerank(inst, s, c).selected_score;
    if (sum > best_mean + 1e-12) {
      best_mean = sum;
      best_w = w;
    }
  }
  auto nearest = [&](double w) {
    std::size_t k = 0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      if (std::fabs(std::log(grid[i] / w)) < std::fabs(std::log(grid[k] / w))) k = i;
    }
    return k;
  };
  const auto chosen = static_cast<long>(nearest(tuned.bandwidth));
  const auto oracle_k = static_cast<long>(nearest(best_w));
  EXPECT_LE(std::labs(chosen - oracle_k), 1L) << "tuned " << tuned.bandwidth << " sweep " << best_w;
}

TEST(Report, CsvAndSignificance) {
  // Method "hi" is uniformly better than "lo" on three instances.
  const std::vector<std::vector<std::vector<double>>> traj{
      {{0.5, 0.8}, {0.4, 0.9}, {0.6, 0.7}},
      {{0.1, 0.2}, {0.2, 0.29}, {0.05, 0.11}},
  };
  const std::vector<std::size_t> budgets{1, 2};
  const std::vector<double> best{0.8, 1.0, 0.7};
  const auto r = make_benchmark_report({"hi", "lo"}, traj, budgets, &best);
  const std::string csv = r.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,budget,mean_score,pct_best,auc");
  EXPECT_NE(csv.find("hi,1,0.5,0,0.65\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find("hi,2,0.8,0.666666666667,0.65\n"), std::string::npos) << csv;
  EXPECT_EQ(r.per_budget[1][0][1], "better");
  EXPECT_EQ(r.per_budget[1][1][0], "worse");
  EXPECT_EQ(r.pooled[0][1], "better");
  const auto j = r.to_json();
  EXPECT_EQ(j["significance"]["alpha"], 0.01);
  EXPECT_EQ(j["significance"]["per_budget"]["2"]["hi"]["lo"], "better");
  EXPECT_THROW(make_benchmark_report({}, {}, budgets), Error);
}

TEST(Report, WithoutReferenceLeavesPctBestEmpty) {
  const std::vector<std::vector<std::vector<double>>> traj{{{0.5}, {0.4}}};
  const std::vector<std::size_t> budgets{1};
  const auto r = make_benchmark_report({"only"}, traj, budgets);
  EXPECT_EQ(r.to_csv(), "method,budget,mean_score,pct_best,auc\nonly,1,0.45,,\n");
  EXPECT_TRUE(r.to_json()["curves"]["only"]["pct_best"].is_null());
}

#pragma once

// Quality-cost curves, normalized AUC, one-sided paired t-tests, Kendall
// tau-c and bandwidth tuning.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bayesrank/errors.hpp"
#include "bayesrank/rerank.hpp"

namespace bayesrank {

inline constexpr double kSignificanceLevel = 0.01;

inline std::vector<std::size_t> default_budget_grid() {
  std::vector<std::size_t> b;
  for (std::size_t v = 10; v <= 200; v += 10) b.push_back(v);
  return b;
}

inline std::vector<double> default_bandwidth_grid() { return {0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0}; }

struct QualityCostCurve {
  std::vector<std::size_t> budgets;
  std::vector<double> mean_scores;
  std::optional<std::vector<double>> pct_best;  // absent without an exhaustive reference
};

/// Best-so-far after min(b, length) calls.
inline double value_at_budget(std::span<const double> trajectory, std::size_t budget) {
  if (trajectory.empty()) throw Error(ErrorKind::empty_input, "empty trajectory");
  const std::size_t i = std::min(std::max<std::size_t>(budget, 1), trajectory.size()) - 1;
  return trajectory[i];
}

/// `best`, when given, holds each instance's exhaustive maximum; an instance
/// counts towards pct_best when its selected score equals that maximum.
inline QualityCostCurve build_curve(std::span<const std::vector<double>> trajectories,
                                    std::span<const std::size_t> budgets, const std::vector<double>* best = nullptr) {
  if (trajectories.empty()) throw Error(ErrorKind::empty_input, "no trajectories");
  if (budgets.empty()) throw Error(ErrorKind::empty_input, "no budgets");
  for (std::size_t i = 1; i < budgets.size(); ++i) {
    if (budgets[i] <= budgets[i - 1]) throw Error(ErrorKind::invalid_config, "budgets must be strictly ascending");
  }
  if (best && best->size() != trajectories.size()) {
    throw Error(ErrorKind::length_mismatch, "exhaustive reference has a different instance count");
  }
  QualityCostCurve c;
  c.budgets.assign(budgets.begin(), budgets.end());
  if (best) c.pct_best.emplace();
  const double n = static_cast<double>(trajectories.size());
  for (std::size_t b : budgets) {
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
      const double v = value_at_budget(trajectories[i], b);
      sum += v;
      if (best && v >= (*best)[i]) ++hits;
    }
    c.mean_scores.push_back(sum / n);
    if (best) c.pct_best->push_back(static_cast<double>(hits) / n);
  }
  return c;
}

inline const std::vector<double>& require_pct_best(const QualityCostCurve& c) {
  if (!c.pct_best) throw Error(ErrorKind::missing_exhaustive_reference, "pct_best needs an exhaustive score table");
  return *c.pct_best;
}

/// Trapezoidal area under mean_scores divided by the budget span.
inline double normalized_auc(const QualityCostCurve& c) {
  if (c.budgets.size() < 2 || c.mean_scores.size() != c.budgets.size()) {
    throw Error(ErrorKind::too_few_points, "normalized AUC needs at least two budget points");
  }
  double area = 0.0;
  for (std::size_t i = 1; i < c.budgets.size(); ++i) {
    const double h = static_cast<double>(c.budgets[i]) - static_cast<double>(c.budgets[i - 1]);
    area += 0.5 * h * (c.mean_scores[i] + c.mean_scores[i - 1]);
  }
  return area / (static_cast<double>(c.budgets.back()) - static_cast<double>(c.budgets.front()));
}

/// Continued fraction for I_x(a, b), modified Lentz; converges for x < (a+1)/(a+b+2).
inline double incomplete_beta_cf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

/// Regularized incomplete beta I_x(a, b).
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorKind::invalid_config, "incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorKind::invalid_config, "incomplete beta needs x in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * incomplete_beta_cf(a, b, x) / a;
  return 1.0 - front * incomplete_beta_cf(b, a, 1.0 - x) / b;
}

/// P(T > t) for Student-t with nu degrees of freedom.
inline double student_t_upper_tail(double t, double nu) {
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double half_two_sided = 0.5 * regularized_incomplete_beta(0.5 * nu, 0.5, nu / (nu + t * t));
  return t > 0.0 ? half_two_sided : 1.0 - half_two_sided;
}

inline double student_t_cdf(double t, double nu) { return 1.0 - student_t_upper_tail(t, nu); }

struct SignificanceReport {
  double t_statistic = 0.0;
  double p_value = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_pairs = 0;
  double mean_difference = 0.0;
  bool zero_variance = false;  // p_value undefined
  std::string direction;       // hypothesis tested, e.g. "a > b"

  nlohmann::json to_json() const {
    nlohmann::json j = {{"t_statistic", t_statistic}, {"n_pairs", n_pairs}, {"mean_difference", mean_difference},
                        {"zero_variance", zero_variance}, {"direction", direction}};
    j["p_value"] = zero_variance ? nlohmann::json(nullptr) : nlohmann::json(p_value);
    return j;
  }
};

/// Tests "a better than b" on d = a - b: t = mean(d) / (sd(d) / sqrt(n)) with
/// the sample standard deviation, p = P(T_{n-1} > t).
inline SignificanceReport paired_t_one_sided(std::span<const double> a, std::span<const double> b,
                                             std::string direction = "a > b") {
  if (a.size() != b.size()) throw Error(ErrorKind::length_mismatch, "paired samples differ in length");
  if (a.size() < 2) throw Error(ErrorKind::too_few_points, "paired t-test needs at least two pairs");
  SignificanceReport r;
  r.direction = std::move(direction);
  r.n_pairs = a.size();
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  bool all_equal = true;
  const double d0 = a[0] - b[0];
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    ss += (d - mean) * (d - mean);
    all_equal = all_equal && d == d0;
  }
  r.mean_difference = mean;
  if (all_equal || ss == 0.0) {
    r.zero_variance = true;
    r.t_statistic = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    return r;
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  r.t_statistic = mean / (sd / std::sqrt(n));
  r.p_value = student_t_upper_tail(r.t_statistic, n - 1.0);
  return r;
}

/// (C - D) * 2m / (n^2 (m - 1)), m = min(#distinct a, #distinct b); pairs
/// tied in either list count as neither.
inline double kendall_tau_c(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::length_mismatch, "kendall tau-c inputs differ in length");
  if (a.size() < 2) throw Error(ErrorKind::too_few_points, "kendall tau-c needs at least two points");
  const std::size_t m = std::min(std::set<double>(a.begin(), a.end()).size(), std::set<double>(b.begin(), b.end()).size());
  if (m < 2) throw Error(ErrorKind::degenerate_instance, "kendall tau-c needs two distinct values in each list");
  long long s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      if (da == 0.0 || db == 0.0) continue;
      s += (da > 0.0) == (db > 0.0) ? 1 : -1;
    }
  }
  const double n = static_cast<double>(a.size());
  const double md = static_cast<double>(m);
  return static_cast<double>(s) * 2.0 * md / (n * n * (md - 1.0));
}

/// "better" when a > b at level alpha, "worse" when b > a, else "tie".
/// Zero-variance differences decide by the sign of the constant difference.
inline std::string significance_cell(std::span<const double> a, std::span<const double> b,
                                     double alpha = kSignificanceLevel) {
  const auto ab = paired_t_one_sided(a, b);
  if (ab.zero_variance) return ab.mean_difference > 0 ? "better" : ab.mean_difference < 0 ? "worse" : "tie";
  if (ab.p_value < alpha) return "better";
  if (paired_t_one_sided(b, a).p_value < alpha) return "worse";
  return "tie";
}

struct BandwidthTuning {
  double bandwidth = 1.0;
  std::vector<double> grid;
  std::vector<double> mean_scores;

  nlohmann::json to_json() const { return {{"bandwidth", bandwidth}, {"grid", grid}, {"mean_scores", mean_scores}}; }
};

/// Grid search: runs bayesopt per bandwidth on `dev` and returns the value
/// with the highest mean selected score, ties to the smaller bandwidth.
inline BandwidthTuning tune_bandwidth(const Dataset& dev, Scorer& scorer, std::span<const double> grid,
                                      const RerankConfig& cfg, std::size_t workers = 1) {
  if (grid.empty()) throw Error(ErrorKind::empty_input, "bandwidth grid is empty");
  if (dev.instances.empty()) throw Error(ErrorKind::empty_input, "dev set has no instances");
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  BandwidthTuning out;
  out.grid = sorted;
  double best = -std::numeric_limits<double>::infinity();
  for (double w : sorted) {
    RerankConfig c = cfg;
    c.bandwidth = w;
    c.validate();
    const auto results = run_dataset(
        dev, [&](const Instance& inst) { return make_policy(Method::bayesopt, inst, c); }, scorer, nullptr, workers);
    double sum = 0.0;
    for (const auto& r : results) sum += r.selected_score;
    const double mean = sum / static_cast<double>(results.size());
    out.mean_scores.push_back(mean);
    if (mean > best) {
      best = mean;
      out.bandwidth = w;
    }
  }
  return out;
}

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Per-method trajectories (instance-aligned across methods) summarized over
/// a budget grid.
struct BenchmarkReport {
  std::vector<std::string> methods;
  std::vector<std::size_t> budgets;
  std::vector<QualityCostCurve> curves;
  std::vector<std::optional<double>> aucs;
  // per_budget[b][i][j]: cell for methods[i] vs methods[j]
  std::vector<std::vector<std::vector<std::string>>> per_budget;
  std::vector<std::vector<std::string>> pooled;
  double alpha = kSignificanceLevel;

  std::string to_csv() const {
    std::ostringstream os;
    os << "method,budget,mean_score,pct_best,auc\n";
    for (std::size_t m = 0; m < methods.size(); ++m) {
      for (std::size_t i = 0; i < budgets.size(); ++i) {
        os << methods[m] << ',' << budgets[i] << ',' << format_number(curves[m].mean_scores[i]) << ',';
        if (curves[m].pct_best) os << format_number((*curves[m].pct_best)[i]);
        os << ',';
        if (aucs[m]) os << format_number(*aucs[m]);
        os << '\n';
      }
    }
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json curves_json = nlohmann::json::object();
    for (std::size_t m = 0; m < methods.size(); ++m) {
      nlohmann::json c = {{"mean_scores", curves[m].mean_scores}};
      c["pct_best"] = curves[m].pct_best ? nlohmann::json(*curves[m].pct_best) : nlohmann::json(nullptr);
      c["auc"] = aucs[m] ? nlohmann::json(*aucs[m]) : nlohmann::json(nullptr);
      curves_json[methods[m]] = std::move(c);
    }
    auto matrix = [&](const std::vector<std::vector<std::string>>& cells) {
      nlohmann::json j = nlohmann::json::object();
      for (std::size_t a = 0; a < methods.size(); ++a) {
        for (std::size_t b = 0; b < methods.size(); ++b) {
          if (a != b) j[methods[a]][methods[b]] = cells[a][b];
        }
      }
      return j;
    };
    nlohmann::json by_budget = nlohmann::json::object();
    for (std::size_t i = 0; i < budgets.size(); ++i) by_budget[std::to_string(budgets[i])] = matrix(per_budget[i]);
    return {{"methods", methods},
            {"budgets", budgets},
            {"curves", std::move(curves_json)},
            {"significance",
             {{"alpha", alpha},
              {"test", "one-sided paired Student t"},
              {"per_budget", std::move(by_budget)},
              {"pooled", matrix(pooled)},
              {"pooled_pairs", "instance x budget pairs over the whole budget grid"}}}};
  }
};

/// `trajectories[m][i]` is method m's trajectory on instance i.
inline BenchmarkReport make_benchmark_report(const std::vector<std::string>& methods,
                                             const std::vector<std::vector<std::vector<double>>>& trajectories,
                                             std::span<const std::size_t> budgets,
                                             const std::vector<double>* best = nullptr,
                                             double alpha = kSignificanceLevel) {
  if (methods.empty()) throw Error(ErrorKind::usage, "no methods to report");
  if (trajectories.size() != methods.size()) throw Error(ErrorKind::length_mismatch, "one trajectory set per method");
  BenchmarkReport r;
  r.methods = methods;
  r.budgets.assign(budgets.begin(), budgets.end());
  r.alpha = alpha;
  for (const auto& t : trajectories) {
    r.curves.push_back(build_curve(t, budgets, best));
    r.aucs.push_back(budgets.size() >= 2 ? std::optional<double>(normalized_auc(r.curves.back())) : std::nullopt);
  }
  const std::size_t n = trajectories.front().size();
  const std::size_t M = methods.size();
  auto values = [&](std::size_t m, std::size_t b) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = value_at_budget(trajectories[m][i], b);
    return v;
  };
  auto cells_for = [&](const std::vector<std::vector<double>>& per_method) {
    std::vector<std::vector<std::string>> cells(M, std::vector<std::string>(M, "-"));
    if (per_method.front().size() < 2) return cells;
    for (std::size_t a = 0; a < M; ++a) {
      for (std::size_t b = 0; b < M; ++b) {
        if (a != b) cells[a][b] = significance_cell(per_method[a], per_method[b], alpha);
      }
    }
    return cells;
  };
  std::vector<std::vector<double>> pooled(M);
  for (std::size_t b : budgets) {
    std::vector<std::vector<double>> per_method(M);
    for (std::size_t m = 0; m < M; ++m) {
      per_method[m] = values(m, b);
      pooled[m].insert(pooled[m].end(), per_method[m].begin(), per_method[m].end());
    }
    r.per_budget.push_back(cells_for(per_method));
  }
  r.pooled = cells_for(pooled);
  return r;
}

}  // namespace bayesrank

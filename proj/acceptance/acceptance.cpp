// Acceptance suite. Each criterion prints one line:
//   PASS|FAIL <criterion>: <measurements>
// and the process exits nonzero when any criterion fails. Arguments, when
// given, select criteria by name.

#include <Eigen/Cholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "bayesrank/bayesrank.hpp"
#include "oracles.hpp"

using namespace bayesrank;

namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// Applies s -> a * s + b to another scorer.
class AffineScorer final : public Scorer {
 public:
  AffineScorer(Scorer& inner, double a, double b) : inner_(inner), a_(a), b_(b) {}
  const std::string& name() const override { return inner_.name(); }
  ScorerKind kind() const override { return inner_.kind(); }
  CostLabel cost() const override { return inner_.cost(); }
  double score(const Instance& inst, std::size_t c) override { return a_ * inner_.score(inst, c) + b_; }

 private:
  Scorer& inner_;
  double a_;
  double b_;
};

Dataset synthetic(std::size_t instances, std::size_t candidates, std::uint64_t seed, const std::string& prefix,
                  std::size_t duplicates = 0) {
  SyntheticDatasetConfig cfg;
  cfg.instances = instances;
  cfg.candidates = candidates;
  cfg.duplicates = duplicates;
  cfg.dim = 8;
  cfg.seed = seed;
  cfg.id_prefix = prefix;
  return generate_synthetic_dataset(cfg);
}

Embedding random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  return normalize_embedding(v);
}

std::vector<double> at_budget(const std::vector<RerankResult>& rs, std::size_t b) {
  std::vector<double> out;
  for (const auto& r : rs) out.push_back(value_at_budget(r.trajectory, b));
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::vector<RerankResult> run_method(const Dataset& ds, Method m, const RerankConfig& cfg, Scorer& main,
                                     Scorer* proxy = nullptr, const PolicyContext& ctx = {}) {
  return run_dataset(
      ds, [&](const Instance& i) { return make_policy(m, i, cfg, ctx); }, main, proxy);
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

/// Runs the CLI and returns {exit status, stdout}.
std::pair<int, std::string> cli(const std::vector<std::string>& args) {
  std::string cmd = shell_quote(BAYESRANK_CLI_PATH);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return {-1, ""};
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  const int status = ::pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

// ------------------------------------------------------------ shared benchmark

/// The synthetic benchmark shared by the superiority, multi-fidelity and batch
/// criteria: 500 instances of 200 candidates in dimension 8, bandwidth tuned on
/// a separate dev set.
struct Benchmark {
  Dataset dev;
  Dataset test;
  SyntheticScorer main;
  double bandwidth = 1.0;
  double tuning_seconds = 0.0;
  std::vector<RerankResult> bayesopt_k1;  // budget 100
  double bayesopt_seconds = 0.0;

  RerankConfig config(std::size_t budget, std::size_t k = 1) const {
    RerankConfig c;
    c.budget_n = budget;
    c.batch_k = k;
    c.bandwidth = bandwidth;
    c.seed = 1;
    return c;
  }
};

Benchmark& benchmark() {
  static Benchmark* b = [] {
    auto* out = new Benchmark;
    out->dev = synthetic(100, 200, 2, "dev");
    out->test = synthetic(500, 200, 1, "syn");
    auto start = std::chrono::steady_clock::now();
    RerankConfig tune_cfg;
    tune_cfg.budget_n = 30;
    tune_cfg.seed = 1;
    const auto grid = default_bandwidth_grid();
    out->bandwidth = tune_bandwidth(out->dev, out->main, grid, tune_cfg).bandwidth;
    out->tuning_seconds = seconds_since(start);
    start = std::chrono::steady_clock::now();
    out->bayesopt_k1 = run_method(out->test, Method::bayesopt, out->config(100), out->main);
    out->bayesopt_seconds = seconds_since(start);
    return out;
  }();
  return *b;
}

// ------------------------------------------------------------ criteria

Outcome gp_oracle() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    const int n = 2 + static_cast<int>(rng.below(49));
    const int q = 5;
    const Bandwidth w(rng.uniform(0.2, 1.0));
    std::vector<Embedding> pts;
    for (int i = 0; i < n + q; ++i) pts.push_back(random_unit(rng, 8));
    Eigen::MatrixXd k_obs(n, n);
    Eigen::MatrixXd k_cross(n, q);
    Eigen::VectorXd prior = Eigen::VectorXd::Ones(q);
    std::vector<double> f(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) k_obs(i, j) = rbf(pts[i], pts[j], w);
      for (int j = 0; j < q; ++j) k_cross(i, j) = rbf(pts[i], pts[n + j], w);
      f[static_cast<std::size_t>(i)] = rng.normal();
    }
    const auto post = posterior(k_obs, k_cross, prior, f, 1e-6);
    oracle::Matrix k(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) k[i][j] = k_obs(i, j);
    }
    for (int j = 0; j < q; ++j) {
      std::vector<double> cross(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) cross[static_cast<std::size_t>(i)] = k_cross(i, j);
      const auto [mu, var] = oracle::gp_posterior(k, cross, 1.0, f, 1e-6);
      worst = std::max({worst, std::fabs(mu - post.mean[j]), std::fabs(var - post.variance[j])});
    }
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-8 && secs < 10.0, fmt("max abs error %.3g (limit 1e-8), %.2f s (limit 10 s)", worst, secs)};
}

Outcome ei_monte_carlo() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(202);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const double mu = rng.uniform(-1.0, 1.0);
    const double sigma = rng.uniform(0.05, 1.0);
    const double best = rng.uniform(-1.0, 1.0);
    double sum = 0.0;
    for (int i = 0; i < 1000000; ++i) sum += std::max(mu + sigma * rng.normal() - best, 0.0);
    worst = std::max(worst, std::fabs(sum / 1e6 - expected_improvement(mu, sigma, best)));
  }
  const double secs = seconds_since(start);
  return {worst <= 3e-3 && secs < 60.0, fmt("max abs error %.3g (limit 3e-3), %.2f s (limit 60 s)", worst, secs)};
}

Outcome kernel_properties() {
  Rng rng(303);
  std::size_t violations = 0;
  struct Pair {
    double dist;
    double k;
  };
  std::vector<Pair> pairs;
  const Bandwidth w(0.5);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_unit(rng, 8);
    const auto b = random_unit(rng, 8);
    const double ab = rbf(a, b, w);
    if (ab != rbf(b, a, w)) ++violations;
    if (!(ab > 0.0 && ab <= 1.0)) ++violations;
    pairs.push_back({squared_distance(a, b), ab});
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) { return x.dist < y.dist; });
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    if (pairs[i].k > pairs[i - 1].k) ++violations;
  }
  std::size_t failed = 0;
  for (int g = 0; g < 50; ++g) {
    const std::size_t n = 2 + rng.below(149);
    std::vector<Embedding> pts;
    for (std::size_t i = 0; i < n; ++i) {
      // Every fourth point repeats an earlier one.
      if (i > 0 && i % 4 == 0) {
        pts.push_back(pts[rng.below(i)]);
      } else {
        pts.push_back(random_unit(rng, 8));
      }
    }
    const auto m = gram(pts, Bandwidth(rng.uniform(0.05, 5.0)), 1e-6);
    Eigen::LLT<Eigen::MatrixXd> llt(m.entries);
    if (llt.info() != Eigen::Success) ++failed;
  }
  return {violations == 0 && failed == 0,
          fmt("%zu property violations over 1000 pairs, %zu of 50 Gram matrices failed to factorize", violations,
              failed)};
}

Outcome exhaustive_equivalence() {
  const auto ds = synthetic(50, 40, 404, "fixture", 10);
  SyntheticScorer main;
  SyntheticProxyScorer proxy({}, 0.6);
  ScoreCovariance sc{{main.name(), proxy.name()}, Eigen::MatrixXd(2, 2)};
  sc.matrix << 1.0, 0.6, 0.6, 1.0;
  const PolicyContext ctx{sc, main.name(), proxy.name()};
  std::vector<double> best;
  for (const auto& inst : ds.instances) {
    double b = -1e300;
    for (std::size_t c = 0; c < inst.size(); ++c) b = std::max(b, main.score(inst, c));
    best.push_back(b);
  }
  std::size_t mismatches = 0;
  std::string methods;
  for (Method m : all_methods()) {
    RerankConfig cfg;
    cfg.budget_n = 40;
    cfg.proxy_m = 20;
    cfg.bandwidth = 0.2;
    const auto rs = run_method(ds, m, cfg, main, &proxy, ctx);
    for (std::size_t i = 0; i < rs.size(); ++i) mismatches += rs[i].selected_score == best[i] ? 0 : 1;
    methods += std::string(methods.empty() ? "" : ",") + to_string(m);
  }
  return {mismatches == 0, fmt("%zu mismatches over 50 instances x {%s}", mismatches, methods.c_str())};
}

Outcome synthetic_superiority() {
  auto& b = benchmark();
  const auto start = std::chrono::steady_clock::now();
  const auto ur = run_method(b.test, Method::uniqrandom, b.config(60), b.main);
  const auto lp = run_method(b.test, Method::logprob_avg, b.config(60), b.main);
  const auto hc = run_method(b.test, Method::hillclimb, b.config(30), b.main);
  const double secs = seconds_since(start) + b.bayesopt_seconds + b.tuning_seconds;
  bool pass = secs < 300.0;
  std::string detail = fmt("w=%g;", b.bandwidth);
  auto check = [&](const char* what, const std::vector<double>& hi, const std::vector<double>& lo) {
    const auto t = paired_t_one_sided(hi, lo);
    const bool ok = !t.zero_variance && t.p_value < 0.01 && t.mean_difference > 0.0;
    pass = pass && ok;
    detail += fmt(" %s %.4f>%.4f p=%.2g%s;", what, mean(hi), mean(lo), t.p_value, ok ? "" : " (not significant)");
  };
  for (std::size_t budget : {30u, 60u}) {
    const auto bo = at_budget(b.bayesopt_k1, budget);
    check(fmt("n=%zu bayesopt>uniqrandom", budget).c_str(), bo, at_budget(ur, budget));
    check(fmt("n=%zu bayesopt>logprob-avg", budget).c_str(), bo, at_budget(lp, budget));
  }
  check("n=30 hillclimb>uniqrandom", at_budget(hc, 30), at_budget(ur, 30));
  check("n=30 bayesopt>hillclimb", at_budget(b.bayesopt_k1, 30), at_budget(hc, 30));
  detail += fmt(" %.1f s incl. tuning (limit 300 s)", secs);
  return {pass, detail};
}

Outcome multi_fidelity() {
  auto& b = benchmark();
  const auto start = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  for (double rho : {0.9, 0.3}) {
    SyntheticProxyScorer proxy({}, rho, SyntheticProxyScorer::Perturbation::smooth);
    // Covariance estimated on the dev set, as a user would.
    Dataset dev = b.dev;
    attach_scores(dev, b.main, b.main.name());
    attach_scores(dev, proxy, proxy.name());
    const auto sc = estimate_score_covariance(dev, {b.main.name(), proxy.name()}).clamped();
    const PolicyContext ctx{sc, b.main.name(), proxy.name()};
    const std::size_t budget = rho > 0.5 ? 10 : 60;
    RerankConfig cfg = b.config(budget);
    cfg.proxy_m = 200;
    const auto multi = run_method(b.test, Method::bayesopt_proxy, cfg, b.main, &proxy, ctx);
    const auto with = at_budget(multi, budget);
    const auto without = at_budget(b.bayesopt_k1, budget);
    if (rho > 0.5) {
      const auto t = paired_t_one_sided(with, without);
      const bool ok = t.p_value < 0.01 && t.mean_difference > 0.0;
      pass = pass && ok;
      detail += fmt("proxy %s cov=%.3f n=10: %.4f vs %.4f p=%.2g%s; ", proxy.name().c_str(), sc.matrix(0, 1),
                    mean(with), mean(without), t.p_value, ok ? "" : " (no gain)");
    } else {
      const auto up = paired_t_one_sided(with, without);
      const auto down = paired_t_one_sided(without, with);
      const bool ok = significance_cell(with, without) == "tie";
      pass = pass && ok;
      detail += fmt("proxy %s cov=%.3f n=60: %.4f vs %.4f p(>)=%.2g p(<)=%.2g%s; ", proxy.name().c_str(),
                    sc.matrix(0, 1), mean(with), mean(without), up.p_value, down.p_value, ok ? "" : " (differs)");
    }
  }
  const double secs = seconds_since(start);
  pass = pass && secs < 300.0;
  detail += fmt("%.1f s (limit 300 s)", secs);
  return {pass, detail};
}

Outcome batch_degradation() {
  auto& b = benchmark();
  const auto k10 = run_method(b.test, Method::bayesopt, b.config(100, 10), b.main);
  const auto k1_20 = at_budget(b.bayesopt_k1, 20);
  const auto k10_20 = at_budget(k10, 20);
  const auto t = paired_t_one_sided(k1_20, k10_20);
  const double gap20 = mean(k1_20) - mean(k10_20);
  const double gap100 = mean(at_budget(b.bayesopt_k1, 100)) - mean(at_budget(k10, 100));
  const bool ok20 = t.p_value < 0.01 && gap20 > 0.0;
  const bool ok100 = std::fabs(gap100) < 0.1 * gap20;
  return {ok20 && ok100, fmt("n=20: k=1 %.4f vs k=10 %.4f (gap %.4f, p=%.2g); n=100 gap %.2g (limit %.2g)",
                             mean(k1_20), mean(k10_20), gap20, t.p_value, gap100, 0.1 * gap20)};
}

Outcome scale_invariance() {
  const auto ds = synthetic(50, 100, 505, "scale", 10);
  SyntheticScorer main;
  SyntheticProxyScorer proxy({}, 0.6, SyntheticProxyScorer::Perturbation::smooth);
  AffineScorer main_t(main, 3.0, 0.5);
  AffineScorer proxy_t(proxy, 3.0, 0.5);
  ScoreCovariance sc{{main.name(), proxy.name()}, Eigen::MatrixXd(2, 2)};
  sc.matrix << 1.0, 0.6, 0.6, 1.0;
  const PolicyContext ctx{sc, main.name(), proxy.name()};
  std::size_t differing = 0;
  std::size_t runs = 0;
  for (Method m : all_methods()) {
    for (std::size_t k : {1u, 4u}) {
      RerankConfig cfg;
      cfg.budget_n = 40;
      cfg.batch_k = k;
      cfg.proxy_m = 30;
      cfg.bandwidth = 0.2;
      cfg.seed = 3;
      const auto a = run_method(ds, m, cfg, main, &proxy, ctx);
      const auto t = run_method(ds, m, cfg, main_t, &proxy_t, ctx);
      for (std::size_t i = 0; i < a.size(); ++i) {
        ++runs;
        if (a[i].evaluated != t[i].evaluated || a[i].selected_index != t[i].selected_index) ++differing;
      }
    }
  }
  return {differing == 0, fmt("%zu of %zu runs changed their selection sequence under s -> 3s + 0.5", differing, runs)};
}

Outcome runtime_overhead() {
  const auto dir = fs::temp_directory_path() / "bayesrank_acceptance_profile";
  fs::create_directories(dir);
  const auto data = (dir / "profile.jsonl").string();
  auto gen = cli({"generate-synthetic", "--instances", "100", "--candidates", "200", "--seed", "11", "-o", data});
  if (gen.first != 0) return {false, "generate-synthetic failed"};
  auto prof = cli({"profile", data, "--method", "bayesopt", "--scorer", "synthetic:bumps", "--budget", "100",
                   "--batch-size", "10", "--bandwidth", "0.2", "--json"});
  fs::remove_all(dir);
  if (prof.first != 0) return {false, "profile failed"};
  const auto j = nlohmann::json::parse(prof.second);
  const double ms = j["overhead_ms_per_instance"].get<double>();
  return {ms <= 50.0, fmt("Similarities + BayesOpt+GP = %.2f ms/instance (limit 50 ms) over %d instances", ms,
                          j["instances"].get<int>())};
}

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / "bayesrank_acceptance_determinism";
  fs::create_directories(dir);
  const auto data = (dir / "data.jsonl").string();
  const auto cov = (dir / "cov").string();
  if (cli({"generate-synthetic", "--instances", "60", "--candidates", "120", "--duplicates", "15", "--seed", "12",
           "--attach", "synthetic:bumps", "--attach", "synthetic:proxy-smooth-0.9", "-o", data})
          .first != 0 ||
      cli({"score-covariance", data, "--scorer", "bumps", "--scorer", "proxy-smooth-0.9", "--out", cov}).first != 0) {
    fs::remove_all(dir);
    return {false, "fixture generation failed"};
  }
  const std::vector<std::vector<std::string>> commands{
      {"rerank", data, "--method", "bayesopt", "--scorer", "bumps", "--budget", "30", "--batch-size", "3"},
      {"rerank", data, "--method", "bayesopt-proxy", "--scorer", "bumps", "--proxy-scorer", "proxy-smooth-0.9",
       "--proxy-count", "40", "--covariance", cov + "/covariance.json", "--budget", "20"},
      {"rerank", data, "--method", "hillclimb", "--scorer", "synthetic:bumps", "--budget", "25"},
      {"rerank", data, "--method", "proxyfirst", "--scorer", "bumps", "--proxy-scorer", "proxy-smooth-0.9",
       "--proxy-count", "30", "--budget", "15"},
      {"rerank", data, "--method", "uniqrandom", "--scorer", "bumps", "--budget", "25"},
      {"benchmark", data, "--methods", "bayesopt,uniqrandom,logprob-avg", "--budgets", "10,20,30", "--scorer",
       "bumps"},
  };
  std::size_t mismatches = 0;
  std::size_t checks = 0;
  for (const auto& base : commands) {
    for (const char* seed : {"0", "9"}) {
      std::vector<std::string> outputs;
      for (const char* workers : {"1", "1", "8", "8"}) {
        auto args = base;
        args.insert(args.end(), {"--seed", seed, "--parallel", workers, "--bandwidth", "0.2"});
        const auto r = cli(args);
        outputs.push_back(r.first == 0 ? r.second : "exit " + std::to_string(r.first));
      }
      for (const auto& o : outputs) {
        ++checks;
        if (o != outputs.front() || o.empty() || o.rfind("exit ", 0) == 0) ++mismatches;
      }
    }
  }
  fs::remove_all(dir);
  return {mismatches == 0, fmt("%zu of %zu outputs differed across reruns and --parallel {1, 8}", mismatches, checks)};
}

Outcome statistics_oracles() {
  Rng rng(606);
  double worst_p = 0.0;
  for (int s = 0; s < 20; ++s) {
    const std::size_t n = 3 + rng.below(38);
    const double shift = rng.uniform(-0.5, 0.8);
    std::vector<double> a(n);
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) {
      b[i] = rng.normal();
      a[i] = b[i] + shift + rng.normal();
    }
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += (a[i] - b[i]) / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += std::pow(a[i] - b[i] - m, 2);
    const double t = m / std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
    const auto r = paired_t_one_sided(a, b);
    worst_p = std::max(worst_p, std::fabs(r.p_value - oracle::t_upper_tail(t, static_cast<double>(n - 1))));
  }
  double worst_tau = 0.0;
  for (int s = 0; s < 50; ++s) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> a(n);
    std::vector<double> b(n);
    for (auto& v : a) v = static_cast<double>(rng.below(6));
    for (auto& v : b) v = static_cast<double>(rng.below(9));
    a[0] = 0;
    a[1] = 1;
    b[0] = 1;
    b[1] = 0;
    worst_tau = std::max(worst_tau, std::fabs(kendall_tau_c(a, b) - oracle::kendall_tau_c(a, b)));
  }
  return {worst_p <= 1e-6 && worst_tau <= 1e-12,
          fmt("t-test p max abs error %.3g over 20 samples (limit 1e-6); tau-c max abs error %.3g over 50 lists",
              worst_p, worst_tau)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gp-oracle-equivalence", gp_oracle},
      {"ei-monte-carlo", ei_monte_carlo},
      {"kernel-properties", kernel_properties},
      {"exhaustive-equivalence", exhaustive_equivalence},
      {"synthetic-superiority", synthetic_superiority},
      {"multi-fidelity-gain", multi_fidelity},
      {"batch-size-degradation", batch_degradation},
      {"scale-invariance", scale_invariance},
      {"runtime-overhead", runtime_overhead},
      {"determinism", determinism},
      {"statistics-oracles", statistics_oracles},
  };
  std::vector<std::string> selected(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), name) == selected.end()) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(start);
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << fmt(" [%.1f s]", secs) << std::endl;
    if (!o.pass) ++failures;
  }
  std::cout << (failures == 0 ? "all acceptance criteria passed" : fmt("%d criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}

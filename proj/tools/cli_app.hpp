#pragma once

// bayesrank command-line front end. run_cli() is the whole program; main()
// only forwards to it, so tests can drive commands in-process.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bayesrank/bayesrank.hpp"

namespace bayesrank::cli {

namespace fs = std::filesystem;

struct CommonOptions {
  std::string dataset;
  std::string scorer;
  std::string proxy_scorer;
  std::string covariance;
  std::string tuning;
  std::string out;
  std::size_t budget = 100;
  std::size_t batch = 1;
  std::size_t init = 5;
  std::size_t proxy_count = 0;
  std::optional<double> bandwidth;
  double jitter = 1e-6;
  std::uint64_t seed = 0;
  std::size_t parallel = 1;
  std::size_t lockstep = 16;
  bool record_times = false;
};

inline void add_dataset(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("dataset", o.dataset, "Dataset JSONL")->required();
}

inline void add_run_flags(CLI::App* cmd, CommonOptions& o, bool with_budget = true) {
  if (with_budget) cmd->add_option("--budget", o.budget, "Max main-scorer calls per instance")->capture_default_str();
  cmd->add_option("--batch-size", o.batch, "Candidates scored per iteration")->capture_default_str();
  cmd->add_option("--init-size", o.init, "Initial random main-scored subset")->capture_default_str();
  cmd->add_option("--proxy-count", o.proxy_count, "Initial proxy evaluations")->capture_default_str();
  cmd->add_option("--bandwidth", o.bandwidth, "RBF bandwidth (default: tuning file, else 1.0)");
  cmd->add_option("--tuning", o.tuning, "bandwidth.json from tune-bandwidth");
  cmd->add_option("--jitter", o.jitter, "GP observation noise")->capture_default_str();
  cmd->add_option("--covariance", o.covariance, "Score covariance JSON");
  cmd->add_option("--scorer", o.scorer, "Main scorer spec");
  cmd->add_option("--proxy-scorer", o.proxy_scorer, "Proxy scorer spec");
  cmd->add_option("--seed", o.seed, "Seed for the per-instance streams")->capture_default_str();
  cmd->add_option("--out", o.out, "Output directory (results + manifest)");
  cmd->add_option("--parallel", o.parallel, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--lockstep", o.lockstep, "Instances sharing one scorer batch")->capture_default_str()->group("");
  cmd->add_flag("--record-times", o.record_times, "Include wall times in result lines");
}

inline std::vector<std::size_t> parse_size_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v == 0) throw Error(ErrorKind::usage, std::string("bad ") + what + " '" + item + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

inline std::vector<double> parse_double_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size()) throw Error(ErrorKind::usage, std::string("bad ") + what + " '" + item + "'");
    out.push_back(v);
  }
  return out;
}

inline std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double resolve_bandwidth(const CommonOptions& o) {
  if (o.bandwidth) return *o.bandwidth;
  std::string path = o.tuning;
  if (path.empty()) {
    const fs::path sibling = fs::path(o.dataset).parent_path() / "bandwidth.json";
    if (fs::exists(sibling)) path = sibling.string();
  }
  if (path.empty()) return 1.0;
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    return j.at("bandwidth").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse_error, "tuning file '" + path + "': " + e.what());
  }
}

inline RerankConfig make_config(const CommonOptions& o) {
  RerankConfig c;
  c.budget_n = o.budget;
  c.batch_k = o.batch;
  c.init_main = o.init;
  c.proxy_m = o.proxy_count;
  c.bandwidth = resolve_bandwidth(o);
  c.jitter = o.jitter;
  c.seed = o.seed;
  c.validate();
  return c;
}

/// --scorer, or the dataset's only precomputed score when there is exactly one.
inline std::string main_scorer_spec(const CommonOptions& o, const Dataset& ds) {
  if (!o.scorer.empty()) return o.scorer;
  if (ds.declared_scorers.size() == 1) return "precomputed:" + ds.declared_scorers.front();
  throw Error(ErrorKind::usage, "--scorer is required unless the dataset carries exactly one score");
}

/// Scorers for one run, wrapped in call counters.
struct ScorerSet {
  std::vector<std::string> specs;
  std::unique_ptr<Scorer> main_inner;
  std::unique_ptr<Scorer> proxy_inner;
  CallLedger ledger;
  std::unique_ptr<CountingScorer> main;
  std::unique_ptr<CountingScorer> proxy;
  PolicyContext context;

  Scorer* proxy_ptr() const { return proxy.get(); }

  nlohmann::json calls_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, e] : ledger.snapshot()) j[name] = e.calls;
    return j;
  }
};

inline std::unique_ptr<ScorerSet> make_scorers(const CommonOptions& o, const Dataset& ds, bool need_proxy) {
  auto s = std::make_unique<ScorerSet>();
  const std::string main_spec = main_scorer_spec(o, ds);
  s->specs.push_back(main_spec);
  s->main_inner = make_scorer(main_spec);
  s->main = std::make_unique<CountingScorer>(*s->main_inner, s->ledger);
  s->context.main_name = s->main_inner->name();
  if (need_proxy) {
    if (o.proxy_scorer.empty()) throw Error(ErrorKind::usage, "proxy strategies need --proxy-scorer");
    if (o.proxy_count == 0) throw Error(ErrorKind::usage, "proxy strategies need --proxy-count >= 1");
    s->specs.push_back(o.proxy_scorer);
    s->proxy_inner = make_scorer(o.proxy_scorer);
    s->proxy = std::make_unique<CountingScorer>(*s->proxy_inner, s->ledger);
    s->context.proxy_name = s->proxy_inner->name();
  }
  return s;
}

inline void load_covariance_if_needed(const CommonOptions& o, const std::vector<Method>& methods, ScorerSet& s) {
  const bool needed = std::find(methods.begin(), methods.end(), Method::bayesopt_proxy) != methods.end();
  if (!needed) return;
  if (o.covariance.empty()) throw Error(ErrorKind::usage, "bayesopt-proxy needs --covariance");
  s.context.score_covariance = load_score_covariance(o.covariance);
}

inline RunManifest start_manifest(const std::string& command, const CommonOptions& o) {
  RunManifest m;
  m.command = command;
  m.seed = o.seed;
  m.dataset_path = o.dataset;
  m.started_at = utc_timestamp();
  if (!o.dataset.empty()) m.hash_input(o.dataset);
  if (!o.covariance.empty()) m.hash_input(o.covariance);
  return m;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::usage, "cannot write '" + path.string() + "'");
  out << text;
}

inline void finish_manifest(RunManifest& m, const std::string& out_dir, const nlohmann::json& extra = {}) {
  m.finished_at = utc_timestamp();
  auto j = m.to_json();
  if (extra.is_object()) {
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  }
  write_text(fs::path(out_dir) / "manifest.json", j.dump(2) + "\n");
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::usage, "cannot create '" + dir + "': " + ec.message());
}

inline std::vector<RerankResult> run_method(Method method, const Dataset& ds, const RerankConfig& cfg, ScorerSet& s,
                                            const CommonOptions& o) {
  const PolicyFactory factory = [&](const Instance& inst) { return make_policy(method, inst, cfg, s.context); };
  return run_dataset(ds, factory, *s.main, uses_proxy(method) ? s.proxy_ptr() : nullptr, o.parallel, o.lockstep);
}

// ---------------------------------------------------------------- commands

inline int cmd_validate(const std::string& path, std::ostream& out) {
  const Dataset ds = load_dataset(path);
  std::size_t raw = 0;
  std::size_t unique = 0;
  std::size_t with_dups = 0;
  for (const auto& inst : ds.instances) {
    raw += inst.raw_candidates.size();
    unique += inst.unique_candidates.size();
    if (inst.unique_candidates.size() < inst.raw_candidates.size()) ++with_dups;
  }
  std::string scorers;
  for (const auto& s : ds.declared_scorers) scorers += (scorers.empty() ? "" : ",") + s;
  char ratio[32];
  std::snprintf(ratio, sizeof ratio, "%.4f", raw == 0 ? 1.0 : static_cast<double>(unique) / static_cast<double>(raw));
  out << "instances: " << ds.instances.size() << '\n'
      << "embedding_dim: " << ds.embedding_dim << '\n'
      << "raw_candidates: " << raw << '\n'
      << "unique_candidates: " << unique << '\n'
      << "instances_with_duplicates: " << with_dups << '\n'
      << "dedup_ratio: " << ratio << '\n'
      << "scorers: " << (scorers.empty() ? "-" : scorers) << '\n';
  return 0;
}

inline int cmd_rerank(const CommonOptions& o, const std::string& method_name, std::ostream& out) {
  const Method method = parse_method(method_name);
  const RerankConfig cfg = make_config(o);
  auto manifest = start_manifest("rerank", o);
  const Dataset ds = load_dataset(o.dataset);
  auto scorers = make_scorers(o, ds, uses_proxy(method));
  load_covariance_if_needed(o, {method}, *scorers);
  const auto results = run_method(method, ds, cfg, *scorers, o);
  std::string body;
  for (const auto& r : results) body += r.to_json(o.record_times).dump() + "\n";
  if (o.out.empty()) {
    out << body;
    return 0;
  }
  ensure_dir(o.out);
  write_text(fs::path(o.out) / "results.jsonl", body);
  manifest.scorer_specs = scorers->specs;
  manifest.config = cfg.to_json();
  manifest.config["method"] = method_name;
  finish_manifest(manifest, o.out, {{"oracle_calls", scorers->calls_json()}});
  return 0;
}

/// Exhaustive maxima per instance, when the main scorer can be queried for
/// every candidate without an external oracle.
inline std::optional<std::vector<double>> exhaustive_reference(const Dataset& ds, Scorer& scorer) {
  if (scorer.kind() == ScorerKind::external) return std::nullopt;
  std::vector<double> best;
  try {
    for (const auto& inst : ds.instances) {
      std::vector<ScoreRequest> reqs;
      for (std::size_t c = 0; c < inst.size(); ++c) reqs.push_back({&inst, c});
      const auto v = scorer.score_batch(reqs);
      best.push_back(*std::max_element(v.begin(), v.end()));
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::missing_precomputed_score) return std::nullopt;
    throw;
  }
  return best;
}

inline int cmd_benchmark(const CommonOptions& o, const std::string& methods_text, const std::string& budgets_text,
                         std::ostream& out) {
  const auto names = split_names(methods_text);
  if (names.empty()) throw Error(ErrorKind::usage, "--methods is empty");
  std::vector<Method> methods;
  for (const auto& n : names) methods.push_back(parse_method(n));
  std::vector<std::size_t> budgets =
      budgets_text.empty() ? default_budget_grid() : parse_size_list(budgets_text, "budget");
  if (budgets.empty()) throw Error(ErrorKind::usage, "--budgets is empty");
  std::sort(budgets.begin(), budgets.end());
  budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());

  CommonOptions run = o;
  run.budget = budgets.back();
  const RerankConfig cfg = make_config(run);
  auto manifest = start_manifest("benchmark", o);
  const Dataset ds = load_dataset(o.dataset);
  if (ds.instances.empty()) throw Error(ErrorKind::empty_input, "dataset has no instances");
  const bool any_proxy = std::any_of(methods.begin(), methods.end(), uses_proxy);
  auto scorers = make_scorers(o, ds, any_proxy);
  load_covariance_if_needed(o, methods, *scorers);

  // Budget-b selections are prefixes of the max-budget run, so each method
  // runs once and every curve point reads its trajectory.
  std::vector<std::vector<std::vector<double>>> trajectories;
  std::optional<std::vector<double>> best;
  for (Method m : methods) {
    const auto results = run_method(m, ds, cfg, *scorers, o);
    std::vector<std::vector<double>> t;
    for (const auto& r : results) t.push_back(r.trajectory);
    if (m == Method::exhaustive && !best) {
      best.emplace();
      for (const auto& r : results) best->push_back(r.selected_score);
    }
    trajectories.push_back(std::move(t));
  }
  if (!best) best = exhaustive_reference(ds, *scorers->main_inner);
  const auto report = make_benchmark_report(names, trajectories, budgets, best ? &*best : nullptr);
  if (o.out.empty()) {
    out << report.to_csv();
    return 0;
  }
  ensure_dir(o.out);
  write_text(fs::path(o.out) / "benchmark.csv", report.to_csv());
  write_text(fs::path(o.out) / "benchmark.json", report.to_json().dump(2) + "\n");
  manifest.scorer_specs = scorers->specs;
  manifest.config = cfg.to_json();
  manifest.config["methods"] = names;
  manifest.config["budgets"] = budgets;
  finish_manifest(manifest, o.out, {{"oracle_calls", scorers->calls_json()}});
  return 0;
}

inline int cmd_score_covariance(const CommonOptions& o, const std::vector<std::string>& specs, std::ostream& out,
                                std::ostream& err) {
  if (specs.empty()) throw Error(ErrorKind::usage, "score-covariance needs at least one --scorer");
  auto manifest = start_manifest("score-covariance", o);
  Dataset ds = load_dataset(o.dataset);
  std::vector<std::string> names;
  for (const auto& spec : specs) {
    auto scorer = make_scorer(spec);
    if (scorer->kind() != ScorerKind::precomputed || dynamic_cast<LogprobScorer*>(scorer.get())) {
      attach_scores(ds, *scorer, scorer->name());
    }
    names.push_back(scorer->name());
  }
  std::vector<std::string> skipped;
  const auto sc = estimate_score_covariance(ds, names, &skipped).clamped();
  if (!skipped.empty()) err << "skipped " << skipped.size() << " degenerate instance(s)\n";
  const std::string text = sc.to_json().dump(2) + "\n";
  if (o.out.empty()) {
    out << text;
    return 0;
  }
  ensure_dir(o.out);
  write_text(fs::path(o.out) / "covariance.json", text);
  manifest.scorer_specs = specs;
  finish_manifest(manifest, o.out, {{"skipped_instances", skipped}});
  return 0;
}

inline int cmd_tune_bandwidth(const CommonOptions& o, const std::string& grid_text, std::ostream& out) {
  const std::vector<double> grid = grid_text.empty() ? default_bandwidth_grid() : parse_double_list(grid_text, "bandwidth");
  if (grid.empty()) throw Error(ErrorKind::usage, "--grid is empty");
  for (double w : grid) (void)Bandwidth(w);
  CommonOptions run = o;
  run.bandwidth = 1.0;
  const RerankConfig cfg = make_config(run);
  auto manifest = start_manifest("tune-bandwidth", o);
  const Dataset ds = load_dataset(o.dataset);
  auto scorers = make_scorers(o, ds, false);
  const auto tuned = tune_bandwidth(ds, *scorers->main, grid, cfg, o.parallel);
  for (std::size_t i = 0; i < tuned.grid.size(); ++i) {
    out << "w=" << format_number(tuned.grid[i]) << " mean_score=" << format_number(tuned.mean_scores[i]) << '\n';
  }
  out << "bandwidth: " << format_number(tuned.bandwidth) << '\n';
  if (!o.out.empty()) {
    ensure_dir(o.out);
    write_text(fs::path(o.out) / "bandwidth.json", tuned.to_json().dump(2) + "\n");
    manifest.scorer_specs = scorers->specs;
    manifest.config = cfg.to_json();
    manifest.config.erase("bandwidth");
    finish_manifest(manifest, o.out, {{"bandwidth", tuned.bandwidth}});
  }
  return 0;
}

/// Stage times summed over instances, each instance run on its own.
inline int cmd_profile(const CommonOptions& o, const std::string& method_name, bool json, std::ostream& out) {
  const Method method = parse_method(method_name);
  const RerankConfig cfg = make_config(o);
  const Dataset ds = load_dataset(o.dataset);
  if (ds.instances.empty()) throw Error(ErrorKind::empty_input, "dataset has no instances");
  auto scorers = make_scorers(o, ds, uses_proxy(method));
  load_covariance_if_needed(o, {method}, *scorers);
  StageTimes totals;
  for (const char* s : {stage::similarities, stage::bayesopt, stage::selection, stage::scoring, stage::total}) {
    totals[s] = 0.0;
  }
  for (const auto& inst : ds.instances) {
    auto policy = make_policy(method, inst, cfg, scorers->context);
    const auto r = run_policy(*policy, *scorers->main, scorers->proxy_ptr());
    for (const auto& [k, v] : r.wall_times) totals[k] += v;
  }
  const double n = static_cast<double>(ds.instances.size());
  const double overhead = totals[stage::similarities] + totals[stage::bayesopt];
  if (json) {
    nlohmann::json j = {{"method", method_name}, {"instances", ds.instances.size()}};
    for (const auto& [k, v] : totals) j["stages"][k] = {{"seconds", v}, {"ms_per_instance", 1e3 * v / n}};
    j["overhead_ms_per_instance"] = 1e3 * overhead / n;
    out << j.dump(2) << '\n';
    return 0;
  }
  char line[128];
  std::snprintf(line, sizeof line, "%-14s %12s %16s\n", "stage", "seconds", "ms/instance");
  out << line;
  for (const char* s : {stage::similarities, stage::bayesopt, stage::selection, stage::scoring, stage::total}) {
    std::snprintf(line, sizeof line, "%-14s %12.6f %16.4f\n", s, totals[s], 1e3 * totals[s] / n);
    out << line;
  }
  std::snprintf(line, sizeof line, "overhead (Similarities + BayesOpt+GP): %.4f ms/instance over %zu instances\n",
                1e3 * overhead / n, ds.instances.size());
  out << line;
  return 0;
}

inline int cmd_generate(const SyntheticDatasetConfig& cfg, const std::vector<std::string>& attach,
                        const std::string& output, std::ostream& out) {
  Dataset ds = generate_synthetic_dataset(cfg);
  for (const auto& spec : attach) {
    auto scorer = make_scorer(spec);
    attach_scores(ds, *scorer, scorer->name());
  }
  if (output.empty() || output == "-") {
    write_dataset(out, ds);
  } else {
    if (const auto parent = fs::path(output).parent_path(); !parent.empty()) ensure_dir(parent.string());
    save_dataset(output, ds);
  }
  return 0;
}

// ---------------------------------------------------------------- entry

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"bayesrank: budgeted reranking with Bayesian optimization"};
  app.require_subcommand(1);
  CommonOptions o;

  auto* validate = app.add_subcommand("validate", "Check a dataset and print duplicate statistics");
  add_dataset(validate, o);

  std::string method;
  auto* rerank = app.add_subcommand("rerank", "Select one candidate per instance");
  add_dataset(rerank, o);
  rerank->add_option("--method", method, "Strategy")->required();
  add_run_flags(rerank, o);

  std::string methods_text;
  std::string budgets_text;
  auto* bench = app.add_subcommand("benchmark", "Quality-cost curves, AUC and significance tables");
  add_dataset(bench, o);
  bench->add_option("--methods", methods_text, "Comma-separated strategies")->required();
  bench->add_option("--budgets", budgets_text, "Comma-separated budgets (default 10,20,...,200)");
  add_run_flags(bench, o, false);

  std::vector<std::string> cov_specs;
  auto* cov = app.add_subcommand("score-covariance", "Estimate the scorer covariance on a dev set");
  add_dataset(cov, o);
  cov->add_option("--scorer", cov_specs, "Scorer spec (repeatable)")->required();
  cov->add_option("--out", o.out, "Output directory");

  std::string grid_text;
  auto* tune = app.add_subcommand("tune-bandwidth", "Grid-search the RBF bandwidth on a dev set");
  add_dataset(tune, o);
  tune->add_option("--grid", grid_text, "Comma-separated bandwidths (default 0.05,0.1,0.2,0.5,1,2,5)");
  add_run_flags(tune, o);

  bool profile_json = false;
  auto* profile = app.add_subcommand("profile", "Per-stage wall time");
  add_dataset(profile, o);
  profile->add_option("--method", method, "Strategy")->required();
  profile->add_flag("--json", profile_json, "Print JSON");
  add_run_flags(profile, o);

  SyntheticDatasetConfig gen;
  std::vector<std::string> attach;
  std::string output;
  auto* generate = app.add_subcommand("generate-synthetic", "Write a synthetic dataset");
  generate->add_option("--instances", gen.instances)->capture_default_str();
  generate->add_option("--candidates", gen.candidates, "Unique candidates per instance")->capture_default_str();
  generate->add_option("--duplicates", gen.duplicates, "Extra duplicate entries per instance")->capture_default_str();
  generate->add_option("--dim", gen.dim)->capture_default_str();
  generate->add_option("--seed", gen.seed)->capture_default_str();
  generate->add_option("--id-prefix", gen.id_prefix)->capture_default_str();
  generate->add_option("--attach", attach, "Scorer spec whose scores are stored (repeatable)");
  generate->add_option("-o,--output", output, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*validate) return cmd_validate(o.dataset, out);
    if (*rerank) return cmd_rerank(o, method, out);
    if (*bench) return cmd_benchmark(o, methods_text, budgets_text, out);
    if (*cov) return cmd_score_covariance(o, cov_specs, out, err);
    if (*tune) return cmd_tune_bandwidth(o, grid_text, out);
    if (*profile) return cmd_profile(o, method, profile_json, out);
    if (*generate) return cmd_generate(gen, attach, output, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace bayesrank::cli

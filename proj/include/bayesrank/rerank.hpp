#pragma once

// Subset-selection strategies for reranking under a scoring budget.
//
// Every strategy is a SelectionPolicy: a per-instance state machine that
// proposes batches of score requests and is fed their values. Drivers
// (run_policy, run_lockstep, run_dataset) own the scorers, so oracle calls of
// many instances can be merged into one batch without changing any
// per-instance result.

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "bayesrank/acquisition.hpp"
#include "bayesrank/data_model.hpp"
#include "bayesrank/errors.hpp"
#include "bayesrank/gp.hpp"
#include "bayesrank/kernels.hpp"
#include "bayesrank/random.hpp"
#include "bayesrank/scorers.hpp"

namespace bayesrank {

namespace stage {
inline constexpr const char* similarities = "Similarities";
inline constexpr const char* bayesopt = "BayesOpt+GP";
inline constexpr const char* selection = "Selection";
inline constexpr const char* scoring = "Scoring";
inline constexpr const char* total = "Total";
}  // namespace stage

enum class Method { bayesopt, bayesopt_proxy, uniqrandom, logprob_avg, logprob_sum, hillclimb, proxyfirst, exhaustive };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::bayesopt: return "bayesopt";
    case Method::bayesopt_proxy: return "bayesopt-proxy";
    case Method::uniqrandom: return "uniqrandom";
    case Method::logprob_avg: return "logprob-avg";
    case Method::logprob_sum: return "logprob-sum";
    case Method::hillclimb: return "hillclimb";
    case Method::proxyfirst: return "proxyfirst";
    case Method::exhaustive: return "exhaustive";
  }
  return "?";
}

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = {Method::bayesopt,  Method::bayesopt_proxy, Method::uniqrandom,
                                              Method::logprob_avg, Method::logprob_sum, Method::hillclimb,
                                              Method::proxyfirst, Method::exhaustive};
  return methods;
}

inline Method parse_method(const std::string& s) {
  for (Method m : all_methods()) {
    if (s == to_string(m)) return m;
  }
  throw Error(ErrorKind::usage, "unknown method '" + s + "'");
}

inline bool uses_proxy(Method m) { return m == Method::bayesopt_proxy || m == Method::proxyfirst; }

struct RerankConfig {
  std::size_t budget_n = 100;  // max main-scorer calls
  std::size_t batch_k = 1;
  std::size_t init_main = 5;
  std::size_t proxy_m = 0;  // initial proxy evaluations
  double bandwidth = 1.0;
  double jitter = 1e-6;
  std::uint64_t seed = 0;

  void validate() const {
    if (budget_n == 0) throw Error(ErrorKind::invalid_config, "budget must be >= 1");
    if (batch_k == 0) throw Error(ErrorKind::invalid_config, "batch size must be >= 1");
    if (init_main == 0) throw Error(ErrorKind::invalid_config, "init size must be >= 1");
    if (!(jitter >= 0.0) || !std::isfinite(jitter)) throw Error(ErrorKind::invalid_config, "jitter must be >= 0");
    (void)Bandwidth(bandwidth);
  }

  nlohmann::json to_json() const {
    return {{"budget", budget_n}, {"batch_size", batch_k}, {"init_size", init_main}, {"proxy_count", proxy_m},
            {"bandwidth", bandwidth}, {"jitter", jitter},   {"seed", seed}};
  }
};

enum class Role : std::uint8_t { main, proxy };

struct Request {
  std::size_t candidate = 0;  // position in Instance::unique_candidates
  Role role = Role::main;
};

/// Observed raw scores, kept in call order.
struct ObservationSet {
  std::vector<std::size_t> main_candidates;
  std::vector<double> main_values;
  std::vector<std::size_t> proxy_candidates;
  std::vector<double> proxy_values;
  std::vector<Request> evaluation_order;
  std::vector<char> main_seen;
  std::vector<char> proxy_seen;

  explicit ObservationSet(std::size_t n = 0) : main_seen(n, 0), proxy_seen(n, 0) {}

  bool observed(std::size_t candidate, Role role) const {
    return (role == Role::main ? main_seen : proxy_seen)[candidate] != 0;
  }
};

using StageTimes = std::map<std::string, double>;

struct RerankResult {
  std::string id;
  std::string method;
  std::size_t selected_index = 0;     // raw-order index of the selected candidate
  std::size_t selected_position = 0;  // its position among the unique candidates
  double selected_score = 0.0;
  std::size_t main_calls = 0;
  std::size_t proxy_calls = 0;
  std::vector<double> trajectory;          // best raw score after each main call
  std::vector<std::size_t> evaluated;      // unique positions, in main-call order
  StageTimes wall_times;

  nlohmann::json to_json(bool include_times) const {
    nlohmann::json times = nlohmann::json::object();
    if (include_times) {
      for (const auto& [k, v] : wall_times) times[k] = v;
    }
    return {{"id", id},
            {"method", method},
            {"selected_index", selected_index},
            {"selected_score", selected_score},
            {"main_calls", main_calls},
            {"proxy_calls", proxy_calls},
            {"trajectory", trajectory},
            {"wall_times", std::move(times)}};
  }
};

class SelectionPolicy {
 public:
  SelectionPolicy(const Instance& instance, const RerankConfig& cfg, std::string method)
      : instance_(instance), cfg_(cfg), method_(std::move(method)), obs_(instance.size()) {
    cfg_.validate();
    if (instance.unique_candidates.empty()) {
      throw Error(ErrorKind::empty_candidate_list, "instance '" + instance.id + "' has no candidates");
    }
    limit_ = std::min(cfg_.budget_n, instance.size());
  }
  virtual ~SelectionPolicy() = default;

  const Instance& instance() const { return instance_; }
  const ObservationSet& observations() const { return obs_; }
  const RerankConfig& config() const { return cfg_; }

  /// Next requests; empty once the policy has finished.
  std::vector<Request> next_batch() {
    const auto start = std::chrono::steady_clock::now();
    const double before = times_[stage::similarities];
    std::vector<Request> batch = done() ? std::vector<Request>{} : propose();
    const double elapsed = seconds_since(start) - (times_[stage::similarities] - before);
    times_[selection_stage()] += elapsed;
    return batch;
  }

  void observe(std::span<const Request> requests, std::span<const double> values) {
    if (requests.size() != values.size()) throw Error(ErrorKind::shape_mismatch, "observation count mismatch");
    for (std::size_t i = 0; i < requests.size(); ++i) {
      const auto& r = requests[i];
      if (r.candidate >= instance_.size()) throw Error(ErrorKind::index_out_of_range, "observed candidate");
      if (obs_.observed(r.candidate, r.role)) {
        throw Error(ErrorKind::invalid_config, "candidate " + std::to_string(r.candidate) + " observed twice");
      }
      obs_.evaluation_order.push_back(r);
      if (r.role == Role::main) {
        obs_.main_seen[r.candidate] = 1;
        obs_.main_candidates.push_back(r.candidate);
        obs_.main_values.push_back(values[i]);
        const double best = trajectory_.empty() ? values[i] : std::max(trajectory_.back(), values[i]);
        trajectory_.push_back(best);
      } else {
        obs_.proxy_seen[r.candidate] = 1;
        obs_.proxy_candidates.push_back(r.candidate);
        obs_.proxy_values.push_back(values[i]);
      }
    }
  }

  virtual bool done() const { return obs_.main_candidates.size() >= limit_; }

  void add_time(const std::string& stage_name, double seconds) { times_[stage_name] += seconds; }
  const StageTimes& times() const { return times_; }

  /// argmax of the raw main scores, ties to the smaller candidate position.
  RerankResult result() const {
    if (obs_.main_candidates.empty()) throw Error(ErrorKind::empty_input, "no main-scorer observations");
    RerankResult r;
    r.id = instance_.id;
    r.method = method_;
    std::size_t best = 0;
    for (std::size_t i = 1; i < obs_.main_candidates.size(); ++i) {
      const double v = obs_.main_values[i];
      const double b = obs_.main_values[best];
      if (v > b || (v == b && obs_.main_candidates[i] < obs_.main_candidates[best])) best = i;
    }
    r.selected_position = obs_.main_candidates[best];
    r.selected_index = instance_.unique_candidates[r.selected_position].index;
    r.selected_score = obs_.main_values[best];
    r.main_calls = obs_.main_candidates.size();
    r.proxy_calls = obs_.proxy_candidates.size();
    r.trajectory = trajectory_;
    r.evaluated = obs_.main_candidates;
    for (const auto& [k, v] : times_) {
      if (v > 0.0) r.wall_times[k] = v;
    }
    return r;
  }

 protected:
  virtual std::vector<Request> propose() = 0;
  virtual const char* selection_stage() const { return stage::selection; }

  static double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  std::size_t remaining() const { return limit_ - obs_.main_candidates.size(); }

  /// Main requests for the first unobserved entries of `order`, at most `count`.
  std::vector<Request> take_main(std::span<const std::size_t> order, std::size_t count) const {
    std::vector<Request> out;
    for (std::size_t c : order) {
      if (out.size() >= count) break;
      if (!obs_.observed(c, Role::main)) out.push_back({c, Role::main});
    }
    return out;
  }

  std::vector<std::size_t> seeded_permutation() const {
    Rng rng(instance_seed(cfg_.seed, instance_.id));
    return rng.permutation(instance_.size());
  }

  const Instance& instance_;
  RerankConfig cfg_;
  std::string method_;
  ObservationSet obs_;
  std::size_t limit_ = 0;
  std::vector<double> trajectory_;
  StageTimes times_;
};

/// Unique positions in UniqRandom order: the raw list (each entry repeated by
/// its multiplicity) is shuffled with the instance stream, then deduplicated
/// keeping first appearances.
inline std::vector<std::size_t> uniq_random_order(const Instance& instance, std::uint64_t seed) {
  std::vector<std::size_t> expanded;
  for (std::size_t r = 0; r < instance.raw_candidates.size(); ++r) {
    for (std::size_t m = 0; m < instance.raw_candidates[r].multiplicity; ++m) {
      expanded.push_back(instance.raw_to_unique[r]);
    }
  }
  Rng rng(instance_seed(seed, instance.id));
  rng.shuffle(std::span<std::size_t>(expanded));
  std::vector<char> seen(instance.size(), 0);
  std::vector<std::size_t> order;
  order.reserve(instance.size());
  for (std::size_t u : expanded) {
    if (!seen[u]) {
      seen[u] = 1;
      order.push_back(u);
    }
  }
  return order;
}

/// Unique positions by descending log-probability, ties to the smaller position.
inline std::vector<std::size_t> logprob_order(const Instance& instance, bool use_sum) {
  std::vector<std::size_t> order(instance.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto key = [&](std::size_t i) {
    const auto& c = instance.unique_candidates[i];
    return use_sum ? c.logprob_sum : c.logprob_avg;
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
  return order;
}

/// Scores a fixed order in one batch.
class FixedOrderPolicy final : public SelectionPolicy {
 public:
  FixedOrderPolicy(const Instance& instance, const RerankConfig& cfg, std::string method,
                   std::vector<std::size_t> order, bool ignore_budget = false)
      : SelectionPolicy(instance, cfg, std::move(method)), order_(std::move(order)) {
    if (ignore_budget) limit_ = instance.size();
  }

 protected:
  std::vector<Request> propose() override { return take_main(order_, remaining()); }

 private:
  std::vector<std::size_t> order_;
};

class ExhaustivePolicy final : public SelectionPolicy {
 public:
  ExhaustivePolicy(const Instance& instance, const RerankConfig& cfg)
      : SelectionPolicy(instance, cfg, to_string(Method::exhaustive)) {
    limit_ = instance.size();
  }

 protected:
  std::vector<Request> propose() override {
    std::vector<std::size_t> all(instance_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return take_main(all, remaining());
  }
};

/// Seeded random initial subset, then repeatedly the unobserved candidate
/// nearest (Euclidean) to the current best, ties to the smaller position.
class HillClimbingPolicy final : public SelectionPolicy {
 public:
  HillClimbingPolicy(const Instance& instance, const RerankConfig& cfg)
      : SelectionPolicy(instance, cfg, to_string(Method::hillclimb)) {}

 protected:
  std::vector<Request> propose() override {
    if (obs_.main_candidates.empty()) {
      const auto perm = seeded_permutation();
      return take_main(perm, std::min(cfg_.init_main, limit_));
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < obs_.main_candidates.size(); ++i) {
      const double v = obs_.main_values[i];
      const double b = obs_.main_values[best];
      if (v > b || (v == b && obs_.main_candidates[i] < obs_.main_candidates[best])) best = i;
    }
    const auto& anchor = instance_.unique_candidates[obs_.main_candidates[best]].embedding;
    std::size_t pick = instance_.size();
    double pick_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < instance_.size(); ++c) {
      if (obs_.observed(c, Role::main)) continue;
      const double d = squared_distance(anchor, instance_.unique_candidates[c].embedding);
      if (d < pick_d) {
        pick_d = d;
        pick = c;
      }
    }
    return {{pick, Role::main}};
  }
};

/// BayesOpt+GP, and with a proxy scorer BayesOpt+GP+Proxy.
///
/// Without a proxy: a seeded random subset of min(init_main, n) candidates is
/// scored; each iteration renormalizes the observed scores, conditions a
/// zero-mean GP with the RBF embedding kernel on them, and scores the top-k
/// unobserved candidates by expected improvement over the best normalized
/// observation. The last batch shrinks to the remaining budget.
///
/// With a proxy: the proxy scores a seeded random subset of min(m, |C|)
/// candidates and the main scorer the first min(init_main, m) of that subset.
/// Observations are <candidate, scorer> pairs under the product kernel
/// K_RBF * K_score, main and proxy values are normalized separately, and only
/// the main scorer is called inside the loop.
class BayesOptPolicy final : public SelectionPolicy {
 public:
  BayesOptPolicy(const Instance& instance, const RerankConfig& cfg)
      : SelectionPolicy(instance, cfg, to_string(Method::bayesopt)) {}

  BayesOptPolicy(const Instance& instance, const RerankConfig& cfg, const ScoreCovariance& sc,
                 const std::string& main_name, const std::string& proxy_name)
      : SelectionPolicy(instance, cfg, to_string(Method::bayesopt_proxy)), with_proxy_(true) {
    if (cfg.proxy_m == 0) throw Error(ErrorKind::invalid_config, "bayesopt-proxy needs a proxy count >= 1");
    const ScoreCovariance c = sc.clamped();
    const auto mi = static_cast<Eigen::Index>(c.index_of(main_name));
    const auto pi = static_cast<Eigen::Index>(c.index_of(proxy_name));
    score_cov_ << c.matrix(mi, mi), c.matrix(mi, pi), c.matrix(pi, mi), c.matrix(pi, pi);
  }

 protected:
  const char* selection_stage() const override { return stage::bayesopt; }

  std::vector<Request> propose() override {
    if (obs_.main_candidates.empty()) return initial_batch();
    ensure_gram();
    return acquire();
  }

 private:
  std::vector<Request> initial_batch() {
    const auto perm = seeded_permutation();
    if (!with_proxy_) return take_main(perm, std::min(cfg_.init_main, limit_));
    const std::size_t m = std::min(cfg_.proxy_m, instance_.size());
    std::vector<Request> out;
    for (std::size_t i = 0; i < m; ++i) out.push_back({perm[i], Role::proxy});
    const std::size_t init = std::min({cfg_.init_main, m, limit_});
    for (std::size_t i = 0; i < init; ++i) out.push_back({perm[i], Role::main});
    return out;
  }

  void ensure_gram() {
    if (gram_) return;
    const auto start = std::chrono::steady_clock::now();
    gram_ = gram(instance_.unique_candidates, Bandwidth(cfg_.bandwidth), 0.0);
    times_[stage::similarities] += seconds_since(start);
  }

  std::vector<Request> acquire() {
    const Eigen::MatrixXd& g = gram_->entries;
    // Observation keys: main observations first, then proxy observations.
    struct Key {
      Eigen::Index candidate;
      int scorer;
    };
    std::vector<Key> keys;
    const auto main_norm = normalize_scores(obs_.main_values);
    std::vector<double> values = main_norm.values;
    for (std::size_t c : obs_.main_candidates) keys.push_back({static_cast<Eigen::Index>(c), 0});
    if (with_proxy_ && !obs_.proxy_values.empty()) {
      const auto proxy_norm = normalize_scores(obs_.proxy_values);
      values.insert(values.end(), proxy_norm.values.begin(), proxy_norm.values.end());
      for (std::size_t c : obs_.proxy_candidates) keys.push_back({static_cast<Eigen::Index>(c), 1});
    }
    const double best = *std::max_element(main_norm.values.begin(), main_norm.values.end());

    std::vector<Eigen::Index> query;
    for (std::size_t c = 0; c < instance_.size(); ++c) {
      if (!obs_.observed(c, Role::main)) query.push_back(static_cast<Eigen::Index>(c));
    }
    const auto n = static_cast<Eigen::Index>(keys.size());
    const auto q = static_cast<Eigen::Index>(query.size());
    Eigen::MatrixXd k_obs(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i; j < n; ++j) {
        const double k = g(keys[i].candidate, keys[j].candidate) * score_cov_(keys[i].scorer, keys[j].scorer);
        k_obs(i, j) = k;
        k_obs(j, i) = k;
      }
    }
    Eigen::MatrixXd k_cross(n, q);
    for (Eigen::Index j = 0; j < q; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) k_cross(i, j) = g(keys[i].candidate, query[j]) * score_cov_(keys[i].scorer, 0);
    }
    const Eigen::VectorXd prior = Eigen::VectorXd::Constant(q, score_cov_(0, 0));
    const auto post = posterior(k_obs, k_cross, prior, values, cfg_.jitter);

    std::vector<AcquisitionValue> ei(static_cast<std::size_t>(q));
    for (Eigen::Index j = 0; j < q; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      ei[jj] = {static_cast<std::size_t>(query[j]),
                expected_improvement(post.mean[jj], std::sqrt(post.variance[jj]), best)};
    }
    std::vector<Request> out;
    for (std::size_t c : top_k(ei, std::min(cfg_.batch_k, remaining()))) out.push_back({c, Role::main});
    return out;
  }

  bool with_proxy_ = false;
  Eigen::Matrix2d score_cov_ = Eigen::Matrix2d::Ones();
  std::optional<GramMatrix> gram_;
};

/// Proxy-scores a seeded random m-subset, main-scores the top min(n, m) of
/// it by proxy score, then continues in UniqRandom order while budget remains.
class ProxyFirstPolicy final : public SelectionPolicy {
 public:
  ProxyFirstPolicy(const Instance& instance, const RerankConfig& cfg)
      : SelectionPolicy(instance, cfg, to_string(Method::proxyfirst)) {
    if (cfg.proxy_m == 0) throw Error(ErrorKind::invalid_config, "proxyfirst needs a proxy count >= 1");
  }

 protected:
  std::vector<Request> propose() override {
    if (obs_.proxy_candidates.empty()) {
      const auto perm = seeded_permutation();
      const std::size_t m = std::min(cfg_.proxy_m, instance_.size());
      std::vector<Request> out;
      for (std::size_t i = 0; i < m; ++i) out.push_back({perm[i], Role::proxy});
      return out;
    }
    std::vector<std::size_t> ranked(obs_.proxy_candidates.size());
    std::iota(ranked.begin(), ranked.end(), std::size_t{0});
    std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
      if (obs_.proxy_values[a] != obs_.proxy_values[b]) return obs_.proxy_values[a] > obs_.proxy_values[b];
      return obs_.proxy_candidates[a] < obs_.proxy_candidates[b];
    });
    std::vector<std::size_t> order;
    for (std::size_t i : ranked) order.push_back(obs_.proxy_candidates[i]);
    std::vector<char> listed(instance_.size(), 0);
    for (std::size_t c : order) listed[c] = 1;
    for (std::size_t c : uniq_random_order(instance_, cfg_.seed)) {
      if (!listed[c]) order.push_back(c);
    }
    return take_main(order, remaining());
  }
};

/// Everything a policy factory may need beyond the instance and config.
struct PolicyContext {
  std::optional<ScoreCovariance> score_covariance;
  std::string main_name;
  std::string proxy_name;
};

inline std::unique_ptr<SelectionPolicy> make_policy(Method method, const Instance& instance, const RerankConfig& cfg,
                                                    const PolicyContext& ctx = {}) {
  switch (method) {
    case Method::bayesopt:
      return std::make_unique<BayesOptPolicy>(instance, cfg);
    case Method::bayesopt_proxy:
      if (!ctx.score_covariance) throw Error(ErrorKind::usage, "bayesopt-proxy needs a score covariance");
      return std::make_unique<BayesOptPolicy>(instance, cfg, *ctx.score_covariance, ctx.main_name, ctx.proxy_name);
    case Method::uniqrandom:
      return std::make_unique<FixedOrderPolicy>(instance, cfg, to_string(method), uniq_random_order(instance, cfg.seed));
    case Method::logprob_avg:
      return std::make_unique<FixedOrderPolicy>(instance, cfg, to_string(method), logprob_order(instance, false));
    case Method::logprob_sum:
      return std::make_unique<FixedOrderPolicy>(instance, cfg, to_string(method), logprob_order(instance, true));
    case Method::hillclimb:
      return std::make_unique<HillClimbingPolicy>(instance, cfg);
    case Method::proxyfirst:
      return std::make_unique<ProxyFirstPolicy>(instance, cfg);
    case Method::exhaustive:
      return std::make_unique<ExhaustivePolicy>(instance, cfg);
  }
  throw Error(ErrorKind::usage, "unknown method");
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline Scorer& scorer_for(Role role, Scorer& main, Scorer* proxy) {
  if (role == Role::main) return main;
  if (!proxy) throw Error(ErrorKind::usage, "strategy requested proxy scores but no proxy scorer was given");
  return *proxy;
}

}  // namespace detail

/// Runs one policy to completion, scoring each batch directly.
inline RerankResult run_policy(SelectionPolicy& policy, Scorer& main, Scorer* proxy = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  for (;;) {
    auto batch = policy.next_batch();
    if (batch.empty()) break;
    const auto t = std::chrono::steady_clock::now();
    std::vector<double> values(batch.size());
    for (Role role : {Role::proxy, Role::main}) {
      std::vector<ScoreRequest> reqs;
      std::vector<std::size_t> slots;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].role == role) {
          reqs.push_back({&policy.instance(), batch[i].candidate});
          slots.push_back(i);
        }
      }
      if (reqs.empty()) continue;
      const auto got = detail::scorer_for(role, main, proxy).score_batch(reqs);
      for (std::size_t i = 0; i < slots.size(); ++i) values[slots[i]] = got[i];
    }
    policy.add_time(stage::scoring, detail::seconds_since(t));
    policy.observe(batch, values);
  }
  policy.add_time(stage::total, detail::seconds_since(start));
  return policy.result();
}

/// Steps several policies together; every round merges all pending requests
/// of one role into a single score_batch call. Scoring time is shared out in
/// proportion to request counts; Total is the sum of each policy's stages.
inline std::vector<RerankResult> run_lockstep(std::span<const std::unique_ptr<SelectionPolicy>> policies, Scorer& main,
                                              Scorer* proxy = nullptr) {
  std::vector<char> active(policies.size(), 1);
  for (;;) {
    std::vector<std::vector<Request>> batches(policies.size());
    bool any = false;
    for (std::size_t p = 0; p < policies.size(); ++p) {
      if (!active[p]) continue;
      batches[p] = policies[p]->next_batch();
      if (batches[p].empty()) {
        active[p] = 0;
      } else {
        any = true;
      }
    }
    if (!any) break;
    std::vector<std::vector<double>> values(policies.size());
    for (std::size_t p = 0; p < policies.size(); ++p) values[p].resize(batches[p].size());
    std::vector<double> share(policies.size(), 0.0);
    for (Role role : {Role::proxy, Role::main}) {
      std::vector<ScoreRequest> reqs;
      std::vector<std::pair<std::size_t, std::size_t>> slots;
      for (std::size_t p = 0; p < policies.size(); ++p) {
        for (std::size_t i = 0; i < batches[p].size(); ++i) {
          if (batches[p][i].role != role) continue;
          reqs.push_back({&policies[p]->instance(), batches[p][i].candidate});
          slots.emplace_back(p, i);
        }
      }
      if (reqs.empty()) continue;
      const auto t = std::chrono::steady_clock::now();
      const auto got = detail::scorer_for(role, main, proxy).score_batch(reqs);
      const double per_request = detail::seconds_since(t) / static_cast<double>(reqs.size());
      for (std::size_t i = 0; i < slots.size(); ++i) {
        values[slots[i].first][slots[i].second] = got[i];
        share[slots[i].first] += per_request;
      }
    }
    for (std::size_t p = 0; p < policies.size(); ++p) {
      if (batches[p].empty()) continue;
      policies[p]->add_time(stage::scoring, share[p]);
      policies[p]->observe(batches[p], values[p]);
    }
  }
  std::vector<RerankResult> out;
  out.reserve(policies.size());
  for (const auto& p : policies) {
    double total = 0.0;
    for (const auto& [k, v] : p->times()) {
      if (k != stage::total) total += v;
    }
    p->add_time(stage::total, total);
    out.push_back(p->result());
  }
  return out;
}

using PolicyFactory = std::function<std::unique_ptr<SelectionPolicy>(const Instance&)>;

/// Runs every instance of a dataset. Instances are processed in chunks of
/// `lockstep` that share scorer batches; chunks are distributed over
/// `workers` threads. Results come back in dataset order and do not depend
/// on either setting.
inline std::vector<RerankResult> run_dataset(const Dataset& dataset, const PolicyFactory& factory, Scorer& main,
                                             Scorer* proxy = nullptr, std::size_t workers = 1,
                                             std::size_t lockstep = 16) {
  const std::size_t n = dataset.instances.size();
  std::vector<RerankResult> results(n);
  lockstep = std::max<std::size_t>(lockstep, 1);
  const std::size_t chunks = (n + lockstep - 1) / lockstep;
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t chunk = next.fetch_add(1);
      if (chunk >= chunks) return;
      {
        std::lock_guard lock(error_mutex);
        if (error) return;
      }
      try {
        const std::size_t lo = chunk * lockstep;
        const std::size_t hi = std::min(n, lo + lockstep);
        std::vector<std::unique_ptr<SelectionPolicy>> policies;
        for (std::size_t i = lo; i < hi; ++i) policies.push_back(factory(dataset.instances[i]));
        auto got = run_lockstep(policies, main, proxy);
        for (std::size_t i = lo; i < hi; ++i) results[i] = std::move(got[i - lo]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, chunks));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

// Single-instance entry points.

inline RerankResult bayesopt_rerank(const Instance& instance, Scorer& scorer, const RerankConfig& cfg) {
  BayesOptPolicy policy(instance, cfg);
  return run_policy(policy, scorer);
}

inline RerankResult bayesopt_proxy_rerank(const Instance& instance, Scorer& scorer, Scorer& proxy,
                                          const ScoreCovariance& sc, const RerankConfig& cfg) {
  BayesOptPolicy policy(instance, cfg, sc, scorer.name(), proxy.name());
  return run_policy(policy, scorer, &proxy);
}

inline RerankResult uniq_random(const Instance& instance, Scorer& scorer, const RerankConfig& cfg) {
  FixedOrderPolicy policy(instance, cfg, to_string(Method::uniqrandom), uniq_random_order(instance, cfg.seed));
  return run_policy(policy, scorer);
}

enum class LogprobMode { avg, sum };

inline RerankResult logprob_sorted(const Instance& instance, Scorer& scorer, const RerankConfig& cfg, LogprobMode mode) {
  const bool sum = mode == LogprobMode::sum;
  FixedOrderPolicy policy(instance, cfg, to_string(sum ? Method::logprob_sum : Method::logprob_avg),
                          logprob_order(instance, sum));
  return run_policy(policy, scorer);
}

inline RerankResult hill_climbing(const Instance& instance, Scorer& scorer, const RerankConfig& cfg) {
  HillClimbingPolicy policy(instance, cfg);
  return run_policy(policy, scorer);
}

inline RerankResult proxy_first(const Instance& instance, Scorer& scorer, Scorer& proxy, const RerankConfig& cfg) {
  ProxyFirstPolicy policy(instance, cfg);
  return run_policy(policy, scorer, &proxy);
}

inline RerankResult exhaustive(const Instance& instance, Scorer& scorer) {
  RerankConfig cfg;
  cfg.budget_n = std::max<std::size_t>(instance.size(), 1);
  ExhaustivePolicy policy(instance, cfg);
  return run_policy(policy, scorer);
}

}  // namespace bayesrank

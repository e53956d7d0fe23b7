#pragma once

// Synthetic score landscapes and datasets for benchmarking.
//
// Landscape for one instance:
//   s(e) = sum_{j=1..5} h_j exp(-|e - c_j|^2 / (2 * 0.25^2)) + eta
// The centers are drawn around the instance's own candidate cloud
// (c_j = normalize(anchor + r * g_j), anchor = normalized mean embedding,
// r = RMS per-coordinate spread of the candidates), so the bumps always land
// where candidates live whatever the embedding geometry. Heights are
// uniform in [0.2, 1.0] and eta ~ N(0, 0.01^2), all seeded from
// (seed, instance id) and, for eta, the candidate embedding bits.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "bayesrank/data_model.hpp"
#include "bayesrank/random.hpp"
#include "bayesrank/scorers.hpp"

namespace bayesrank {

struct LandscapeParams {
  std::size_t bumps = 5;
  double width = 0.25;
  double noise_sd = 0.01;
  double min_height = 0.2;
  double max_height = 1.0;
  std::uint64_t seed = 0;

  /// Bound on |grad s| of the noiseless landscape: each bump contributes at
  /// most h * exp(-1/2) / width.
  double lipschitz_bound() const { return static_cast<double>(bumps) * max_height * std::exp(-0.5) / width; }
};

inline std::uint64_t embedding_hash(const Embedding& e) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (float v : e.values()) h = mix64(h ^ std::bit_cast<std::uint32_t>(v));
  return h;
}

/// Bump centers and heights of one instance.
struct InstanceLandscape {
  std::vector<std::vector<double>> centers;
  std::vector<double> heights;

  double noiseless(const Embedding& e, double width) const {
    double s = 0.0;
    for (std::size_t j = 0; j < centers.size(); ++j) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < e.dim(); ++i) {
        const double d = e[i] - centers[j][i];
        d2 += d * d;
      }
      s += heights[j] * std::exp(-d2 / (2.0 * width * width));
    }
    return s;
  }
};

inline InstanceLandscape build_landscape(const Instance& instance, const LandscapeParams& p) {
  const auto& cands = instance.unique_candidates;
  if (cands.empty()) throw Error(ErrorKind::empty_candidate_list, "instance '" + instance.id + "'");
  const std::size_t dim = cands.front().embedding.dim();
  std::vector<double> anchor(dim, 0.0);
  for (const auto& c : cands) {
    for (std::size_t i = 0; i < dim; ++i) anchor[i] += c.embedding[i];
  }
  double norm = 0.0;
  for (double v : anchor) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 1e-12) {
    for (double& v : anchor) v /= norm;
  }
  double spread = 0.0;
  for (const auto& c : cands) {
    for (std::size_t i = 0; i < dim; ++i) spread += (c.embedding[i] - anchor[i]) * (c.embedding[i] - anchor[i]);
  }
  spread = std::sqrt(spread / static_cast<double>(cands.size() * dim));

  Rng rng(instance_seed(p.seed, instance.id));
  InstanceLandscape land;
  for (std::size_t j = 0; j < p.bumps; ++j) {
    std::vector<double> c(dim);
    double cn = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      c[i] = anchor[i] + spread * rng.normal();
      cn += c[i] * c[i];
    }
    cn = std::sqrt(cn);
    if (cn > 1e-12) {
      for (double& v : c) v /= cn;
    }
    land.centers.push_back(std::move(c));
    land.heights.push_back(rng.uniform(p.min_height, p.max_height));
  }
  return land;
}

namespace detail {

/// Thread-safe per-instance cache keyed by instance id.
template <typename T>
class InstanceCache {
 public:
  template <typename Make>
  std::shared_ptr<const T> get(const Instance& instance, Make&& make) {
    {
      std::lock_guard lock(mutex_);
      auto it = cache_.find(instance.id);
      if (it != cache_.end() && it->second.first == instance.unique_candidates.size()) return it->second.second;
    }
    auto value = std::make_shared<const T>(make(instance));
    std::lock_guard lock(mutex_);
    cache_[instance.id] = {instance.unique_candidates.size(), value};
    return value;
  }

 private:
  std::mutex mutex_;
  std::map<std::string, std::pair<std::size_t, std::shared_ptr<const T>>> cache_;
};

}  // namespace detail

/// Main synthetic oracle: the RBF-bump landscape plus seeded noise.
class SyntheticScorer final : public Scorer {
 public:
  explicit SyntheticScorer(LandscapeParams params = {}, std::string name = "bumps")
      : params_(params), name_(std::move(name)) {}

  const std::string& name() const override { return name_; }
  ScorerKind kind() const override { return ScorerKind::synthetic; }
  CostLabel cost() const override { return CostLabel::expensive; }
  const LandscapeParams& params() const { return params_; }

  std::shared_ptr<const InstanceLandscape> landscape(const Instance& instance) {
    return cache_.get(instance, [this](const Instance& inst) { return build_landscape(inst, params_); });
  }

  double noiseless(const Instance& instance, const Embedding& e) { return landscape(instance)->noiseless(e, params_.width); }

  double score(const Instance& instance, std::size_t candidate) override {
    const auto& c = candidate_at(instance, candidate);
    const auto land = landscape(instance);
    Rng noise(mix64(instance_seed(params_.seed, instance.id) ^ embedding_hash(c.embedding)));
    return land->noiseless(c.embedding, params_.width) + params_.noise_sd * noise.normal();
  }

 private:
  LandscapeParams params_;
  std::string name_;
  detail::InstanceCache<InstanceLandscape> cache_;
};

/// Cheap proxy: main score plus a perturbation of scale tau, set per instance
/// from the population std of the main scores so that the per-instance
/// correlation with the main scorer is exactly `target`:
///   tau = sd_main * sqrt(1 / target^2 - 1).
///
/// Perturbation::smooth uses an independent bump landscape, residualized
/// against the main scores and standardized over the instance's candidates.
/// Perturbation::iid uses independent N(0, 1) draws, residualized the same
/// way.
class SyntheticProxyScorer final : public Scorer {
 public:
  enum class Perturbation { smooth, iid };

  SyntheticProxyScorer(LandscapeParams main_params, double target, Perturbation kind = Perturbation::iid,
                       std::string name = {})
      : main_(main_params), target_(target), kind_(kind) {
    if (!(target > 0.0 && target <= 1.0)) {
      throw Error(ErrorKind::invalid_config, "proxy target covariance must lie in (0, 1]");
    }
    if (name.empty()) name = std::string(kind == Perturbation::smooth ? "proxy-smooth-" : "proxy-") + format_target(target);
    name_ = std::move(name);
  }

  const std::string& name() const override { return name_; }
  ScorerKind kind() const override { return ScorerKind::synthetic; }
  CostLabel cost() const override { return CostLabel::cheap; }
  double target() const { return target_; }
  Perturbation perturbation() const { return kind_; }

  double score(const Instance& instance, std::size_t candidate) override {
    (void)candidate_at(instance, candidate);
    const auto values = cache_.get(instance, [this](const Instance& inst) { return proxy_values(inst); });
    return (*values)[candidate];
  }

  static std::string format_target(double target) {
    std::string s = std::to_string(target);
    while (s.size() > 1 && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  }

 private:
  static constexpr std::uint64_t kSalt = 0x70726f7879ULL;

  std::vector<double> proxy_values(const Instance& inst) {
    const std::size_t n = inst.unique_candidates.size();
    const double dn = static_cast<double>(n);
    std::vector<double> m(n);
    std::vector<double> u(n);
    LandscapeParams other = main_.params();
    other.seed ^= kSalt;
    const InstanceLandscape field = build_landscape(inst, other);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& e = inst.unique_candidates[i].embedding;
      m[i] = main_.score(inst, i);
      if (kind_ == Perturbation::smooth) {
        u[i] = field.noiseless(e, other.width);
      } else {
        Rng rng(mix64(instance_seed(other.seed, inst.id) ^ embedding_hash(e)));
        u[i] = rng.normal();
      }
    }
    double mm = 0.0;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mm += m[i];
      mu += u[i];
    }
    mm /= dn;
    mu /= dn;
    double var_m = 0.0;
    double cov = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      var_m += (m[i] - mm) * (m[i] - mm);
      cov += (u[i] - mu) * (m[i] - mm);
    }
    const double beta = var_m > 0.0 ? cov / var_m : 0.0;
    double var_r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = (u[i] - mu) - beta * (m[i] - mm);
      var_r += u[i] * u[i];
    }
    const double sd_m = std::sqrt(var_m / dn);
    const double sd_r = std::sqrt(var_r / dn);
    const double tau = sd_m * std::sqrt(1.0 / (target_ * target_) - 1.0);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = m[i] + (sd_r > 1e-12 ? tau * u[i] / sd_r : 0.0);
    return out;
  }

  SyntheticScorer main_;
  double target_;
  Perturbation kind_;
  std::string name_;
  detail::InstanceCache<std::vector<double>> cache_;
};

struct SyntheticDatasetConfig {
  std::size_t instances = 100;
  std::size_t candidates = 200;  // unique candidates per instance
  std::size_t duplicates = 0;    // extra raw entries repeating earlier candidates
  std::size_t dim = 8;
  double spread = 0.12;          // per-coordinate std of candidates around the anchor
  std::uint64_t seed = 1;
  LandscapeParams landscape{};   // used to correlate logprob_avg with quality
  double logprob_signal = 0.03;  // weight of the standardized landscape value in logprob_avg
  double logprob_noise = 0.1;
  std::string id_prefix = "syn";
};

/// Generates instances whose candidates cluster around a random anchor
/// direction. logprob_avg is weakly correlated with the main landscape
/// (correlation ~0.29 with the defaults); lengths are uniform in [8, 40] and
/// logprob_sum = logprob_avg * length.
inline Dataset generate_synthetic_dataset(const SyntheticDatasetConfig& cfg) {
  if (cfg.candidates == 0 || cfg.dim == 0) throw Error(ErrorKind::invalid_config, "candidates and dim must be > 0");
  Dataset ds;
  ds.embedding_dim = cfg.dim;
  SyntheticScorer landscape(cfg.landscape);
  for (std::size_t k = 0; k < cfg.instances; ++k) {
    char id[64];
    std::snprintf(id, sizeof id, "%s-%06zu", cfg.id_prefix.c_str(), k);
    Instance inst;
    inst.id = id;
    inst.source = "synthetic source " + std::to_string(k);
    Rng rng(instance_seed(cfg.seed, inst.id));

    std::vector<double> anchor(cfg.dim);
    for (double& v : anchor) v = rng.normal();
    std::vector<Candidate> uniques;
    for (std::size_t c = 0; c < cfg.candidates; ++c) {
      std::vector<double> e(cfg.dim);
      double n2 = 0.0;
      for (double v : anchor) n2 += v * v;
      for (std::size_t i = 0; i < cfg.dim; ++i) e[i] = anchor[i] / std::sqrt(n2) + cfg.spread * rng.normal();
      Candidate cand;
      cand.text = inst.id + "/cand-" + std::to_string(c);
      cand.embedding = normalize_embedding(e);
      uniques.push_back(std::move(cand));
    }

    std::vector<std::size_t> raw_order(cfg.candidates);
    for (std::size_t c = 0; c < cfg.candidates; ++c) raw_order[c] = c;
    for (std::size_t d = 0; d < cfg.duplicates; ++d) {
      const auto src = static_cast<std::size_t>(rng.below(cfg.candidates));
      std::size_t first = 0;
      while (raw_order[first] != src) ++first;
      const auto slots = raw_order.size() - first;  // insert anywhere after the first occurrence
      const auto at = first + 1 + static_cast<std::size_t>(rng.below(slots));
      raw_order.insert(raw_order.begin() + static_cast<std::ptrdiff_t>(at), src);
    }

    Instance probe;
    probe.id = inst.id;
    probe.unique_candidates = uniques;
    std::vector<double> quality(cfg.candidates);
    double mean = 0.0;
    for (std::size_t c = 0; c < cfg.candidates; ++c) mean += quality[c] = landscape.noiseless(probe, uniques[c].embedding);
    mean /= static_cast<double>(cfg.candidates);
    double var = 0.0;
    for (double q : quality) var += (q - mean) * (q - mean);
    const double sd = std::sqrt(var / static_cast<double>(cfg.candidates));
    for (std::size_t c = 0; c < cfg.candidates; ++c) {
      const double z = sd > 1e-12 ? (quality[c] - mean) / sd : 0.0;
      const double avg = std::min(-0.5 + cfg.logprob_signal * z + cfg.logprob_noise * rng.normal(), -0.01);
      const auto length = 8 + static_cast<double>(rng.below(33));
      uniques[c].logprob_avg = avg;
      uniques[c].logprob_sum = avg * length;
    }

    for (std::size_t r = 0; r < raw_order.size(); ++r) {
      Candidate c = uniques[raw_order[r]];
      c.index = r;
      inst.raw_candidates.push_back(std::move(c));
    }
    finalize_instance(inst);
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

/// Stores `scorer`'s value for every candidate under `name` in the
/// precomputed score maps (raw and unique lists).
inline void attach_scores(Dataset& ds, Scorer& scorer, const std::string& name) {
  for (auto& inst : ds.instances) {
    for (std::size_t u = 0; u < inst.unique_candidates.size(); ++u) {
      inst.unique_candidates[u].scores[name] = scorer.score(inst, u);
    }
    for (std::size_t r = 0; r < inst.raw_candidates.size(); ++r) {
      inst.raw_candidates[r].scores[name] = inst.unique_candidates[inst.raw_to_unique[r]].scores[name];
    }
  }
  ds.declared_scorers = collect_scorer_names(ds);
}

}  // namespace bayesrank

#pragma once

// Black-box scoring oracles and call accounting.
//
// Scorers address candidates by their position in Instance::unique_candidates.

#include <chrono>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "bayesrank/data_model.hpp"
#include "bayesrank/errors.hpp"

namespace bayesrank {

enum class ScorerKind { precomputed, external, synthetic };
enum class CostLabel { free, cheap, expensive };

inline const char* to_string(ScorerKind k) {
  switch (k) {
    case ScorerKind::precomputed: return "precomputed";
    case ScorerKind::external: return "external";
    case ScorerKind::synthetic: return "synthetic";
  }
  return "?";
}

inline const char* to_string(CostLabel c) {
  switch (c) {
    case CostLabel::free: return "free";
    case CostLabel::cheap: return "cheap";
    case CostLabel::expensive: return "expensive";
  }
  return "?";
}

struct ScoreRequest {
  const Instance* instance = nullptr;
  std::size_t candidate = 0;
};

class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual const std::string& name() const = 0;
  virtual ScorerKind kind() const = 0;
  virtual CostLabel cost() const = 0;

  virtual double score(const Instance& instance, std::size_t candidate) = 0;

  /// Same values as per-request score(), in request order.
  virtual std::vector<double> score_batch(std::span<const ScoreRequest> requests) {
    std::vector<double> out;
    out.reserve(requests.size());
    for (const auto& r : requests) out.push_back(score(*r.instance, r.candidate));
    return out;
  }

 protected:
  static const Candidate& candidate_at(const Instance& instance, std::size_t candidate) {
    if (candidate >= instance.unique_candidates.size()) {
      throw Error(ErrorKind::index_out_of_range, "candidate " + std::to_string(candidate) + " of instance '" +
                                                     instance.id + "' (size " +
                                                     std::to_string(instance.unique_candidates.size()) + ")");
    }
    return instance.unique_candidates[candidate];
  }
};

/// Reads a named entry of the candidate's precomputed score map.
class PrecomputedScorer final : public Scorer {
 public:
  explicit PrecomputedScorer(std::string name, CostLabel cost = CostLabel::expensive)
      : name_(std::move(name)), cost_(cost) {}

  const std::string& name() const override { return name_; }
  ScorerKind kind() const override { return ScorerKind::precomputed; }
  CostLabel cost() const override { return cost_; }

  double score(const Instance& instance, std::size_t candidate) override {
    const auto& c = candidate_at(instance, candidate);
    auto it = c.scores.find(name_);
    if (it == c.scores.end()) {
      throw Error(ErrorKind::missing_precomputed_score, "instance '" + instance.id + "' candidate " +
                                                            std::to_string(candidate) + " has no score '" + name_ +
                                                            "'");
    }
    return it->second;
  }

 private:
  std::string name_;
  CostLabel cost_;
};

/// Free pseudo-scorer returning a generation log-probability statistic.
class LogprobScorer final : public Scorer {
 public:
  enum class Mode { avg, sum };

  explicit LogprobScorer(Mode mode) : mode_(mode), name_(mode == Mode::avg ? "logprob_avg" : "logprob_sum") {}

  const std::string& name() const override { return name_; }
  ScorerKind kind() const override { return ScorerKind::precomputed; }
  CostLabel cost() const override { return CostLabel::free; }

  double score(const Instance& instance, std::size_t candidate) override {
    const auto& c = candidate_at(instance, candidate);
    return mode_ == Mode::avg ? c.logprob_avg : c.logprob_sum;
  }

 private:
  Mode mode_;
  std::string name_;
};

/// Per-scorer request counts and cumulative wall time. Thread safe.
class CallLedger {
 public:
  struct Entry {
    std::size_t calls = 0;
    double seconds = 0.0;
  };

  void record(const std::string& scorer, std::size_t calls, double seconds) {
    std::lock_guard lock(mutex_);
    auto& e = entries_[scorer];
    e.calls += calls;
    e.seconds += seconds;
  }

  Entry get(const std::string& scorer) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(scorer);
    return it == entries_.end() ? Entry{} : it->second;
  }

  std::map<std::string, Entry> snapshot() const {
    std::lock_guard lock(mutex_);
    return entries_;
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Entry> entries_;
};

/// Forwards to another scorer and records every request in a ledger.
class CountingScorer final : public Scorer {
 public:
  CountingScorer(Scorer& inner, CallLedger& ledger) : inner_(inner), ledger_(ledger) {}

  const std::string& name() const override { return inner_.name(); }
  ScorerKind kind() const override { return inner_.kind(); }
  CostLabel cost() const override { return inner_.cost(); }

  double score(const Instance& instance, std::size_t candidate) override {
    const auto start = std::chrono::steady_clock::now();
    const double v = inner_.score(instance, candidate);
    ledger_.record(inner_.name(), 1, seconds_since(start));
    return v;
  }

  std::vector<double> score_batch(std::span<const ScoreRequest> requests) override {
    const auto start = std::chrono::steady_clock::now();
    auto out = inner_.score_batch(requests);
    ledger_.record(inner_.name(), requests.size(), seconds_since(start));
    return out;
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  Scorer& inner_;
  CallLedger& ledger_;
};

}  // namespace bayesrank

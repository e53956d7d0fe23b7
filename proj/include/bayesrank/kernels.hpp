#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "bayesrank/data_model.hpp"
#include "bayesrank/errors.hpp"

namespace bayesrank {

/// RBF bandwidth w > 0.
class Bandwidth {
 public:
  explicit Bandwidth(double w) : w_(w) {
    if (!std::isfinite(w) || w <= 0.0) {
      throw Error(ErrorKind::invalid_config, "bandwidth must be finite and > 0, got " + std::to_string(w));
    }
  }
  double value() const noexcept { return w_; }
  bool operator==(const Bandwidth&) const = default;

 private:
  double w_;
};

/// exp(-|a-b|^2 / (2 w^2))
inline double rbf(const Embedding& a, const Embedding& b, Bandwidth w) {
  const double d2 = squared_distance(a, b);
  return std::exp(-d2 / (2.0 * w.value() * w.value()));
}

struct GramMatrix {
  Eigen::MatrixXd entries;
  double jitter_applied = 0.0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(entries.rows()); }
};

/// Entry (i, j) is rbf(e_i, e_j); jitter is added on the diagonal. Only the
/// upper triangle is evaluated, so the result is exactly symmetric.
inline GramMatrix gram(std::span<const Embedding> embeddings, Bandwidth w, double jitter = 0.0) {
  if (embeddings.empty()) throw Error(ErrorKind::empty_input, "gram of an empty embedding list");
  if (!(jitter >= 0.0)) throw Error(ErrorKind::invalid_config, "jitter must be >= 0");
  const auto n = static_cast<Eigen::Index>(embeddings.size());
  GramMatrix g{Eigen::MatrixXd(n, n), jitter};
  for (Eigen::Index i = 0; i < n; ++i) {
    g.entries(i, i) = 1.0 + jitter;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double k = rbf(embeddings[i], embeddings[j], w);
      g.entries(i, j) = k;
      g.entries(j, i) = k;
    }
  }
  return g;
}

inline GramMatrix gram(const std::vector<Candidate>& candidates, Bandwidth w, double jitter = 0.0) {
  std::vector<Embedding> embeddings;
  embeddings.reserve(candidates.size());
  for (const auto& c : candidates) embeddings.push_back(c.embedding);
  return gram(std::span<const Embedding>(embeddings), w, jitter);
}

/// Empirical covariance between scoring functions over per-instance
/// normalized scores.
struct ScoreCovariance {
  std::vector<std::string> scorers;
  Eigen::MatrixXd matrix;

  std::size_t index_of(const std::string& name) const {
    auto it = std::find(scorers.begin(), scorers.end(), name);
    if (it == scorers.end()) throw Error(ErrorKind::unknown_scorer, "score covariance has no scorer '" + name + "'");
    return static_cast<std::size_t>(it - scorers.begin());
  }

  /// Copy with off-diagonal entries clamped to [-limit, limit].
  ScoreCovariance clamped(double limit = 0.999) const {
    ScoreCovariance out = *this;
    for (Eigen::Index i = 0; i < out.matrix.rows(); ++i) {
      for (Eigen::Index j = 0; j < out.matrix.cols(); ++j) {
        if (i != j) out.matrix(i, j) = std::clamp(out.matrix(i, j), -limit, limit);
      }
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < matrix.cols(); ++j) row.push_back(matrix(i, j));
      rows.push_back(std::move(row));
    }
    return {{"scorers", scorers}, {"matrix", std::move(rows)}};
  }

  static ScoreCovariance from_json(const nlohmann::json& j) {
    ScoreCovariance sc;
    try {
      sc.scorers = j.at("scorers").get<std::vector<std::string>>();
      const auto& rows = j.at("matrix");
      const auto n = static_cast<Eigen::Index>(sc.scorers.size());
      if (rows.size() != sc.scorers.size()) throw Error(ErrorKind::shape_mismatch, "matrix rows != scorer count");
      sc.matrix.resize(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (rows[i].size() != sc.scorers.size()) throw Error(ErrorKind::shape_mismatch, "matrix is not square");
        for (Eigen::Index j2 = 0; j2 < n; ++j2) sc.matrix(i, j2) = rows[i][j2].get<double>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::parse_error, std::string("score covariance: ") + e.what());
    }
    return sc;
  }
};

inline ScoreCovariance load_score_covariance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::parse_error, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse_error, path + ": " + e.what());
  }
  return ScoreCovariance::from_json(j);
}

/// Per instance and per scorer, normalizes the unique candidates' scores to
/// mean 0 / population variance 1, concatenates across instances and returns
/// the pairwise population covariance. Instances where any scorer is constant
/// are skipped; their ids are appended to `skipped` when given.
inline ScoreCovariance estimate_score_covariance(const Dataset& dev, const std::vector<std::string>& scorer_names,
                                                 std::vector<std::string>* skipped = nullptr) {
  if (scorer_names.empty()) throw Error(ErrorKind::empty_input, "no scorer names given");
  const std::size_t t = scorer_names.size();
  std::vector<std::vector<double>> columns(t);
  std::size_t used = 0;
  for (const auto& inst : dev.instances) {
    const std::size_t n = inst.unique_candidates.size();
    std::vector<std::vector<double>> block(t, std::vector<double>(n));
    bool degenerate = n < 2;
    for (std::size_t s = 0; s < t && !degenerate; ++s) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto& scores = inst.unique_candidates[i].scores;
        auto it = scores.find(scorer_names[s]);
        if (it == scores.end()) {
          throw Error(ErrorKind::missing_scores, "instance '" + inst.id + "' candidate " + std::to_string(i) +
                                                     " has no score '" + scorer_names[s] + "'");
        }
        block[s][i] = it->second;
      }
      double mean = 0.0;
      for (double v : block[s]) mean += v;
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double v : block[s]) var += (v - mean) * (v - mean);
      var /= static_cast<double>(n);
      const double sd = std::sqrt(var);
      if (sd < 1e-12) {
        degenerate = true;
        break;
      }
      for (double& v : block[s]) v = (v - mean) / sd;
    }
    if (degenerate) {
      if (skipped) skipped->push_back(inst.id);
      continue;
    }
    ++used;
    for (std::size_t s = 0; s < t; ++s) columns[s].insert(columns[s].end(), block[s].begin(), block[s].end());
  }
  if (used == 0) throw Error(ErrorKind::degenerate_instance, "every instance has constant scores for some scorer");

  const std::size_t total = columns[0].size();
  std::vector<double> means(t, 0.0);
  for (std::size_t s = 0; s < t; ++s) {
    for (double v : columns[s]) means[s] += v;
    means[s] /= static_cast<double>(total);
  }
  ScoreCovariance sc{scorer_names, Eigen::MatrixXd(t, t)};
  for (std::size_t a = 0; a < t; ++a) {
    for (std::size_t b = a; b < t; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < total; ++i) acc += (columns[a][i] - means[a]) * (columns[b][i] - means[b]);
      const double cov = acc / static_cast<double>(total);
      sc.matrix(a, b) = cov;
      sc.matrix(b, a) = cov;
    }
  }
  return sc;
}

/// A (candidate, scoring function) pair: one input of the multi-fidelity kernel.
struct ObservationKey {
  std::size_t candidate = 0;
  std::size_t scorer = 0;
  bool operator==(const ObservationKey&) const = default;
};

/// Product kernel: gram[y_i, y_j] * sc[f_k, f_l].
inline double multi_kernel(ObservationKey p, ObservationKey q, const GramMatrix& g, const ScoreCovariance& sc) {
  const auto n = static_cast<std::size_t>(g.entries.rows());
  const auto t = static_cast<std::size_t>(sc.matrix.rows());
  if (p.candidate >= n || q.candidate >= n || p.scorer >= t || q.scorer >= t) {
    throw Error(ErrorKind::index_out_of_range, "observation key outside the kernel matrices");
  }
  return g.entries(static_cast<Eigen::Index>(p.candidate), static_cast<Eigen::Index>(q.candidate)) *
         sc.matrix(static_cast<Eigen::Index>(p.scorer), static_cast<Eigen::Index>(q.scorer));
}

}  // namespace bayesrank

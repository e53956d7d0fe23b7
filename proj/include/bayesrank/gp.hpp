#pragma once

// Exact zero-mean Gaussian-process conditioning.
//
//   mu(a)    = K(a,A) (K(A,A) + noise I)^-1 f(A)
//   var(a)   = K(a,a) + noise - K(a,A) (K(A,A) + noise I)^-1 K(A,a)
//
// evaluated through a Cholesky factor and triangular solves.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bayesrank/errors.hpp"

namespace bayesrank {

struct NormalizedScores {
  std::vector<double> values;
  double mean = 0.0;
  double std = 0.0;
  bool degenerate = false;
};

/// (x - mean) / std with the population std; a constant list maps to zeros
/// and is flagged degenerate.
inline NormalizedScores normalize_scores(std::span<const double> raw) {
  if (raw.empty()) throw Error(ErrorKind::empty_input, "cannot normalize an empty score list");
  NormalizedScores out;
  const auto n = static_cast<double>(raw.size());
  for (double v : raw) out.mean += v;
  out.mean /= n;
  double var = 0.0;
  for (double v : raw) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / n);
  out.values.resize(raw.size());
  if (out.std < 1e-12) {
    out.degenerate = true;
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return out;
  }
  for (std::size_t i = 0; i < raw.size(); ++i) out.values[i] = (raw[i] - out.mean) / out.std;
  return out;
}

struct PosteriorStats {
  std::vector<double> mean;
  std::vector<double> variance;
  double noise = 0.0;  // diagonal noise actually used after escalation
};

inline constexpr double kMaxEscalatedNoise = 1e-2;

/// Posterior from precomputed kernel blocks.
///   k_obs:   n x n prior covariance among observed keys (no noise)
///   k_cross: n x q covariance between observed keys and queries
///   prior:   q prior variances K(a, a)
/// On Cholesky failure the noise is multiplied by 10 (starting from 1e-10
/// when zero) until it exceeds 1e-2.
inline PosteriorStats posterior(const Eigen::MatrixXd& k_obs, const Eigen::MatrixXd& k_cross,
                                const Eigen::VectorXd& prior, std::span<const double> values, double noise) {
  const Eigen::Index n = k_obs.rows();
  if (n == 0) throw Error(ErrorKind::empty_input, "posterior needs at least one observation");
  if (k_obs.cols() != n || k_cross.rows() != n || k_cross.cols() != prior.size() ||
      static_cast<Eigen::Index>(values.size()) != n) {
    throw Error(ErrorKind::shape_mismatch, "posterior inputs have inconsistent shapes");
  }
  if (!(noise >= 0.0)) throw Error(ErrorKind::invalid_config, "noise must be >= 0");

  Eigen::LLT<Eigen::MatrixXd> llt;
  double used = noise;
  for (;;) {
    Eigen::MatrixXd a = k_obs;
    a.diagonal().array() += used;
    llt.compute(a);
    if (llt.info() == Eigen::Success) break;
    used = used > 0.0 ? used * 10.0 : 1e-10;
    if (used > kMaxEscalatedNoise) {
      throw Error(ErrorKind::not_positive_definite,
                  "Cholesky failed for a " + std::to_string(n) + "x" + std::to_string(n) + " system");
    }
  }

  const Eigen::Map<const Eigen::VectorXd> f(values.data(), n);
  const Eigen::VectorXd beta = llt.matrixL().solve(f);
  const Eigen::MatrixXd v = llt.matrixL().solve(k_cross);

  PosteriorStats out;
  out.noise = used;
  const Eigen::Index q = k_cross.cols();
  out.mean.resize(static_cast<std::size_t>(q));
  out.variance.resize(static_cast<std::size_t>(q));
  for (Eigen::Index j = 0; j < q; ++j) {
    out.mean[static_cast<std::size_t>(j)] = v.col(j).dot(beta);
    const double var = prior(j) + used - v.col(j).squaredNorm();
    out.variance[static_cast<std::size_t>(j)] = std::max(var, 0.0);
  }
  return out;
}

/// Key-based front end: `kernel(k1, k2)` supplies every covariance.
template <typename Key, typename Kernel>
PosteriorStats posterior(const std::vector<Key>& query, const std::vector<Key>& observed, std::span<const double> values,
                         Kernel&& kernel, double noise) {
  const auto n = static_cast<Eigen::Index>(observed.size());
  const auto q = static_cast<Eigen::Index>(query.size());
  Eigen::MatrixXd k_obs(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double k = kernel(observed[i], observed[j]);
      k_obs(i, j) = k;
      k_obs(j, i) = k;
    }
  }
  Eigen::MatrixXd k_cross(n, q);
  Eigen::VectorXd prior(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    prior(j) = kernel(query[j], query[j]);
    for (Eigen::Index i = 0; i < n; ++i) k_cross(i, j) = kernel(observed[i], query[j]);
  }
  return posterior(k_obs, k_cross, prior, values, noise);
}

template <typename Key, typename Kernel>
PosteriorStats posterior(const std::vector<Key>& query, const std::vector<Key>& observed, const NormalizedScores& values,
                         Kernel&& kernel, double noise) {
  return posterior(query, observed, std::span<const double>(values.values), std::forward<Kernel>(kernel), noise);
}

}  // namespace bayesrank

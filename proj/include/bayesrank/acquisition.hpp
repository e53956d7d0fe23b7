#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bayesrank/errors.hpp"

namespace bayesrank {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

/// Phi(z) = erfc(-z / sqrt(2)) / 2. Going through erfc keeps full relative
/// accuracy in the lower tail, where 1 + erf(z / sqrt(2)) would cancel.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline constexpr double kSigmaFloor = 1e-12;

/// E[max(X - best, 0)] for X ~ N(mu, sigma^2):
///   sigma * (z Phi(z) + phi(z)),  z = (mu - best) / sigma.
/// For sigma below 1e-12 the limit max(mu - best, 0) is returned.
inline double expected_improvement(double mu, double sigma, double best) {
  if (sigma < 0.0) throw Error(ErrorKind::negative_sigma, "sigma = " + std::to_string(sigma));
  if (!std::isfinite(mu) || !std::isfinite(sigma) || !std::isfinite(best)) {
    throw Error(ErrorKind::non_finite, "expected_improvement inputs must be finite");
  }
  if (sigma < kSigmaFloor) return std::max(mu - best, 0.0);
  const double z = (mu - best) / sigma;
  return std::max(sigma * (z * normal_cdf(z) + normal_pdf(z)), 0.0);
}

struct AcquisitionValue {
  std::size_t candidate_index = 0;
  double ei = 0.0;
};

/// Indices of the min(k, n) largest EI values, ordered by descending EI and
/// then ascending candidate index.
inline std::vector<std::size_t> top_k(std::span<const AcquisitionValue> scores, std::size_t k) {
  std::vector<AcquisitionValue> sorted(scores.begin(), scores.end());
  const std::size_t take = std::min(k, sorted.size());
  auto better = [](const AcquisitionValue& a, const AcquisitionValue& b) {
    if (a.ei != b.ei) return a.ei > b.ei;
    return a.candidate_index < b.candidate_index;
  };
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(take), sorted.end(), better);
  std::vector<std::size_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(sorted[i].candidate_index);
  return out;
}

}  // namespace bayesrank

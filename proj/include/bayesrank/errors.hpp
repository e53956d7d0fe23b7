#pragma once

#include <stdexcept>
#include <string>

namespace bayesrank {

/// Failure categories. Each maps onto one CLI exit code through exit_code().
enum class ErrorKind {
  // data (exit 1)
  parse_error,
  missing_field,
  dimension_mismatch,
  zero_norm,
  non_finite,
  missing_scores,
  degenerate_instance,
  empty_input,
  empty_candidate_list,
  index_out_of_range,
  shape_mismatch,
  not_positive_definite,
  negative_sigma,
  length_mismatch,
  too_few_points,
  zero_variance,
  missing_exhaustive_reference,
  // usage (exit 2)
  invalid_config,
  unknown_scorer,
  usage,
  // oracle (exit 3)
  missing_precomputed_score,
  oracle_protocol_error,
  oracle_timeout,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse_error: return "ParseError";
    case ErrorKind::missing_field: return "MissingField";
    case ErrorKind::dimension_mismatch: return "DimensionMismatch";
    case ErrorKind::zero_norm: return "ZeroNorm";
    case ErrorKind::non_finite: return "NonFinite";
    case ErrorKind::missing_scores: return "MissingScores";
    case ErrorKind::degenerate_instance: return "DegenerateInstance";
    case ErrorKind::empty_input: return "EmptyInput";
    case ErrorKind::empty_candidate_list: return "EmptyCandidateList";
    case ErrorKind::index_out_of_range: return "IndexOutOfRange";
    case ErrorKind::shape_mismatch: return "ShapeMismatch";
    case ErrorKind::not_positive_definite: return "NotPositiveDefinite";
    case ErrorKind::negative_sigma: return "NegativeSigma";
    case ErrorKind::length_mismatch: return "LengthMismatch";
    case ErrorKind::too_few_points: return "TooFewPoints";
    case ErrorKind::zero_variance: return "ZeroVariance";
    case ErrorKind::missing_exhaustive_reference: return "MissingExhaustiveReference";
    case ErrorKind::invalid_config: return "InvalidConfig";
    case ErrorKind::unknown_scorer: return "UnknownScorer";
    case ErrorKind::usage: return "UsageError";
    case ErrorKind::missing_precomputed_score: return "MissingPrecomputedScore";
    case ErrorKind::oracle_protocol_error: return "OracleProtocolError";
    case ErrorKind::oracle_timeout: return "OracleTimeout";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// 0 success, 1 data error, 2 usage error, 3 oracle failure.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_config:
    case ErrorKind::unknown_scorer:
    case ErrorKind::usage:
      return 2;
    case ErrorKind::missing_precomputed_score:
    case ErrorKind::oracle_protocol_error:
    case ErrorKind::oracle_timeout:
      return 3;
    default:
      return 1;
  }
}

}  // namespace bayesrank

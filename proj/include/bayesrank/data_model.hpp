#pragma once

// Candidates, instances, datasets and the JSONL dataset format.
//
// One instance per line:
//   {"id": str, "source": str,
//    "candidates": [{"text": str, "embedding": [float, ...],
//                    "logprob_sum": float, "logprob_avg": float,
//                    "scores": {str: float}?, "multiplicity": int?}, ...]}
// with an optional first line {"meta": {"embedding_dim": int, "normalized": bool}}.
// Candidates are listed in raw sampling order and may repeat.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "bayesrank/errors.hpp"

namespace bayesrank {

/// Candidate embedding. Stored in single precision, read back as double for
/// all kernel math.
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(std::vector<float> values) : values_(std::move(values)) {}

  std::size_t dim() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return static_cast<double>(values_[i]); }
  const std::vector<float>& values() const noexcept { return values_; }

  double norm() const noexcept {
    double sum = 0.0;
    for (float v : values_) sum += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(sum);
  }

  bool operator==(const Embedding&) const = default;

 private:
  std::vector<float> values_;
};

inline double squared_distance(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorKind::dimension_mismatch,
                "embedding dimensions " + std::to_string(a.dim()) + " and " +
                    std::to_string(b.dim()) + " differ");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

/// Divides by the Euclidean norm (computed in double precision).
inline Embedding normalize_embedding(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::empty_input, "empty embedding");
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::non_finite, "embedding has a non-finite entry");
    sum += v * v;
  }
  const double norm = std::sqrt(sum);
  if (norm <= 1e-12) throw Error(ErrorKind::zero_norm, "embedding norm is zero");
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i] / norm);
  return Embedding(std::move(out));
}

struct Candidate {
  std::size_t index = 0;  // ordinal in raw sampling order
  std::string text;
  Embedding embedding;
  double logprob_sum = 0.0;
  double logprob_avg = 0.0;
  std::map<std::string, double> scores;
  std::size_t multiplicity = 1;

  bool operator==(const Candidate&) const = default;
};

struct Instance {
  std::string id;
  std::string source;
  std::vector<Candidate> raw_candidates;
  std::vector<Candidate> unique_candidates;
  /// raw_to_unique[i] is the position in unique_candidates of raw candidate i.
  std::vector<std::size_t> raw_to_unique;

  std::size_t size() const noexcept { return unique_candidates.size(); }

  bool operator==(const Instance&) const = default;
};

struct Dataset {
  std::vector<Instance> instances;
  std::size_t embedding_dim = 0;
  std::vector<std::string> declared_scorers;

  bool operator==(const Dataset&) const = default;
};

/// Exact-text deduplication; survivors keep their original index and their
/// first-appearance order. Multiplicities of merged entries are summed.
inline std::vector<Candidate> dedup(std::span<const Candidate> raw) {
  std::vector<Candidate> out;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& c : raw) {
    auto [it, inserted] = seen.emplace(c.text, out.size());
    if (inserted) {
      out.push_back(c);
    } else {
      out[it->second].multiplicity += c.multiplicity;
    }
  }
  return out;
}

/// Fills unique_candidates and raw_to_unique from raw_candidates.
inline void finalize_instance(Instance& instance) {
  instance.unique_candidates = dedup(instance.raw_candidates);
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t u = 0; u < instance.unique_candidates.size(); ++u) {
    position.emplace(instance.unique_candidates[u].text, u);
  }
  instance.raw_to_unique.clear();
  instance.raw_to_unique.reserve(instance.raw_candidates.size());
  for (const auto& c : instance.raw_candidates) instance.raw_to_unique.push_back(position.at(c.text));
}

/// Sorted union of the score names carried by any candidate.
inline std::vector<std::string> collect_scorer_names(const Dataset& dataset) {
  std::set<std::string> names;
  for (const auto& inst : dataset.instances) {
    for (const auto& c : inst.raw_candidates) {
      for (const auto& [name, value] : c.scores) names.insert(name);
    }
  }
  return {names.begin(), names.end()};
}

namespace detail {

[[noreturn]] inline void fail_at(ErrorKind kind, std::size_t line, const std::string& msg) {
  throw Error(kind, "line " + std::to_string(line) + ": " + msg);
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) fail_at(ErrorKind::missing_field, line, std::string("missing field '") + key + "'");
  return *it;
}

inline double require_number(const nlohmann::json& obj, const char* key, std::size_t line) {
  const auto& v = require(obj, key, line);
  if (!v.is_number()) fail_at(ErrorKind::parse_error, line, std::string("field '") + key + "' is not a number");
  return v.get<double>();
}

inline Candidate parse_candidate(const nlohmann::json& j, std::size_t index, bool normalized,
                                 std::size_t line) {
  if (!j.is_object()) fail_at(ErrorKind::parse_error, line, "candidate is not an object");
  Candidate c;
  c.index = index;
  const auto& text = require(j, "text", line);
  if (!text.is_string()) fail_at(ErrorKind::parse_error, line, "candidate text is not a string");
  c.text = text.get<std::string>();

  const auto& emb = require(j, "embedding", line);
  if (!emb.is_array() || emb.empty()) fail_at(ErrorKind::parse_error, line, "embedding must be a nonempty array");
  std::vector<double> values;
  values.reserve(emb.size());
  for (const auto& v : emb) {
    if (!v.is_number()) fail_at(ErrorKind::parse_error, line, "embedding entry is not a number");
    // Round through single precision: that is the on-disk representation.
    values.push_back(static_cast<double>(static_cast<float>(v.get<double>())));
  }
  try {
    if (normalized) {
      std::vector<float> stored(values.begin(), values.end());
      c.embedding = Embedding(std::move(stored));
      for (double v : values) {
        if (!std::isfinite(v)) throw Error(ErrorKind::non_finite, "embedding has a non-finite entry");
      }
      if (std::abs(c.embedding.norm() - 1.0) > 1e-4) {
        fail_at(ErrorKind::parse_error, line, "embedding declared normalized has norm " +
                                                  std::to_string(c.embedding.norm()));
      }
    } else {
      c.embedding = normalize_embedding(values);
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::parse_error) throw;
    fail_at(e.kind(), line, e.what());
  }

  c.logprob_sum = require_number(j, "logprob_sum", line);
  c.logprob_avg = require_number(j, "logprob_avg", line);
  if (!std::isfinite(c.logprob_sum) || !std::isfinite(c.logprob_avg) || c.logprob_sum > 0.0 ||
      c.logprob_avg > 0.0) {
    fail_at(ErrorKind::parse_error, line, "log-probabilities must be finite and <= 0");
  }
  if (auto it = j.find("scores"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) fail_at(ErrorKind::parse_error, line, "scores must be an object");
    for (const auto& [name, value] : it->items()) {
      if (!value.is_number()) fail_at(ErrorKind::parse_error, line, "score '" + name + "' is not a number");
      c.scores.emplace(name, value.get<double>());
    }
  }
  if (auto it = j.find("multiplicity"); it != j.end()) {
    if (!it->is_number_unsigned() || it->get<std::size_t>() == 0) {
      fail_at(ErrorKind::parse_error, line, "multiplicity must be a positive integer");
    }
    c.multiplicity = it->get<std::size_t>();
  }
  return c;
}

}  // namespace detail

/// Parses a JSONL dataset from a stream. Every error message carries the
/// 1-based line number it was detected on.
inline Dataset read_dataset(std::istream& in) {
  Dataset dataset;
  bool normalized = false;
  bool saw_content = false;
  std::optional<std::size_t> declared_dim;
  std::unordered_set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      detail::fail_at(ErrorKind::parse_error, line, e.what());
    }
    if (!j.is_object()) detail::fail_at(ErrorKind::parse_error, line, "line is not a JSON object");
    if (auto meta = j.find("meta"); meta != j.end()) {
      if (saw_content) detail::fail_at(ErrorKind::parse_error, line, "meta header must be the first line");
      if (auto d = meta->find("embedding_dim"); d != meta->end()) {
        if (!d->is_number_unsigned() || d->get<std::size_t>() == 0) {
          detail::fail_at(ErrorKind::parse_error, line, "embedding_dim must be a positive integer");
        }
        declared_dim = d->get<std::size_t>();
      }
      if (auto n = meta->find("normalized"); n != meta->end()) normalized = n->get<bool>();
      saw_content = true;
      continue;
    }
    saw_content = true;

    Instance inst;
    const auto& id = detail::require(j, "id", line);
    if (!id.is_string()) detail::fail_at(ErrorKind::parse_error, line, "id is not a string");
    inst.id = id.get<std::string>();
    if (!ids.insert(inst.id).second) detail::fail_at(ErrorKind::parse_error, line, "duplicate instance id '" + inst.id + "'");
    const auto& source = detail::require(j, "source", line);
    if (!source.is_string()) detail::fail_at(ErrorKind::parse_error, line, "source is not a string");
    inst.source = source.get<std::string>();
    const auto& cands = detail::require(j, "candidates", line);
    if (!cands.is_array()) detail::fail_at(ErrorKind::parse_error, line, "candidates is not an array");
    for (std::size_t i = 0; i < cands.size(); ++i) {
      Candidate c = detail::parse_candidate(cands[i], i, normalized, line);
      const std::size_t expected = declared_dim ? *declared_dim : dataset.embedding_dim;
      if (expected != 0 && c.embedding.dim() != expected) {
        detail::fail_at(ErrorKind::dimension_mismatch, line,
                        "candidate " + std::to_string(i) + " has embedding dimension " +
                            std::to_string(c.embedding.dim()) + ", expected " + std::to_string(expected));
      }
      if (dataset.embedding_dim == 0) dataset.embedding_dim = c.embedding.dim();
      inst.raw_candidates.push_back(std::move(c));
    }
    finalize_instance(inst);
    dataset.instances.push_back(std::move(inst));
  }
  if (declared_dim) dataset.embedding_dim = *declared_dim;
  dataset.declared_scorers = collect_scorer_names(dataset);
  return dataset;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::parse_error, "cannot open '" + path + "'");
  return read_dataset(in);
}

inline nlohmann::json to_json(const Candidate& c) {
  nlohmann::json emb = nlohmann::json::array();
  for (float v : c.embedding.values()) emb.push_back(static_cast<double>(v));
  nlohmann::json j = {{"text", c.text},
                      {"embedding", std::move(emb)},
                      {"logprob_sum", c.logprob_sum},
                      {"logprob_avg", c.logprob_avg}};
  if (!c.scores.empty()) j["scores"] = c.scores;
  if (c.multiplicity != 1) j["multiplicity"] = c.multiplicity;
  return j;
}

inline nlohmann::json to_json(const Instance& inst) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : inst.raw_candidates) cands.push_back(to_json(c));
  return {{"id", inst.id}, {"source", inst.source}, {"candidates", std::move(cands)}};
}

/// Writes the meta header (normalized: true) and one line per instance.
inline void write_dataset(std::ostream& out, const Dataset& dataset) {
  nlohmann::json meta = {{"meta", {{"embedding_dim", dataset.embedding_dim}, {"normalized", true}}}};
  out << meta.dump() << '\n';
  for (const auto& inst : dataset.instances) out << to_json(inst).dump() << '\n';
}

inline void save_dataset(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::parse_error, "cannot write '" + path + "'");
  write_dataset(out, dataset);
}

}  // namespace bayesrank

#pragma once

// Run manifests: what was run, on which inputs, when.

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <stdexcept>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "bayesrank/errors.hpp"

namespace bayesrank {

/// SHA-1 of "blob <size>\0" + content, as git computes object ids.
inline std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    const unsigned char b = digest[i];
    out += hex[b >> 4];
    out += hex[b & 15];
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::parse_error, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::string dataset_path;
  std::vector<std::string> scorer_specs;
  std::map<std::string, std::string> input_hashes;  // path -> git blob hash
  std::string started_at;
  std::string finished_at;

  void hash_input(const std::string& path) { input_hashes[path] = git_blob_hash(read_file(path)); }

  nlohmann::json to_json() const {
    return {{"command", command},         {"config", config},           {"seed", seed},
            {"dataset", dataset_path},    {"scorers", scorer_specs},    {"input_hashes", input_hashes},
            {"started_at", started_at},   {"finished_at", finished_at}};
  }
};

}  // namespace bayesrank

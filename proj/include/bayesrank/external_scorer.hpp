#pragma once

// Scorer backed by an external oracle process speaking newline-delimited
// JSON over a child process's stdin/stdout or a TCP socket.
//
//   server -> {"ready": true, "name": str}          once, at startup
//   client -> {"req_id": int, "source": str, "text": str}
//   server -> {"req_id": int, "score": float} | {"req_id": int, "error": str}
//
// Responses may come back in any order. POSIX only.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <regex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "bayesrank/scorers.hpp"

namespace bayesrank {

inline constexpr double kDefaultOracleTimeoutSecs = 30.0;

/// BAYESRANK_ORACLE_TIMEOUT_SECS when set and positive, else 30 s.
inline double oracle_timeout_from_env() {
  if (const char* v = std::getenv("BAYESRANK_ORACLE_TIMEOUT_SECS")) {
    char* end = nullptr;
    const double secs = std::strtod(v, &end);
    if (end != v && secs > 0.0) return secs;
  }
  return kDefaultOracleTimeoutSecs;
}

class ExternalScorer final : public Scorer {
 public:
  /// `endpoint` is either "host:port" or a shell command line.
  explicit ExternalScorer(const std::string& endpoint, double timeout_secs = oracle_timeout_from_env())
      : timeout_secs_(timeout_secs) {
    ::signal(SIGPIPE, SIG_IGN);
    static const std::regex host_port(R"(^([A-Za-z0-9_.\-]+|\[[0-9A-Fa-f:]+\]):([0-9]{1,5})$)");
    std::smatch m;
    if (std::regex_match(endpoint, m, host_port)) {
      connect_tcp(m[1].str(), m[2].str());
    } else {
      spawn(endpoint);
    }
    try {
      handshake();
    } catch (...) {
      shutdown();
      throw;
    }
  }

  ExternalScorer(const ExternalScorer&) = delete;
  ExternalScorer& operator=(const ExternalScorer&) = delete;

  ~ExternalScorer() override { shutdown(); }

  const std::string& name() const override { return name_; }
  ScorerKind kind() const override { return ScorerKind::external; }
  CostLabel cost() const override { return CostLabel::expensive; }

  /// Protocol request lines written so far.
  std::size_t messages_sent() const {
    std::lock_guard lock(mutex_);
    return messages_sent_;
  }

  double score(const Instance& instance, std::size_t candidate) override {
    ScoreRequest r{&instance, candidate};
    return score_batch(std::span<const ScoreRequest>(&r, 1)).front();
  }

  /// Pipelines the whole batch: requests are written while responses are
  /// read, so neither side can block on a full pipe.
  std::vector<double> score_batch(std::span<const ScoreRequest> requests) override {
    std::lock_guard lock(mutex_);
    std::vector<double> out(requests.size());
    if (requests.empty()) return out;
    if (broken_) throw Error(ErrorKind::oracle_protocol_error, "oracle connection is unusable after an earlier failure");

    std::string outgoing;
    std::unordered_map<long long, std::size_t> pending;
    for (std::size_t i = 0; i < requests.size(); ++i) {
      const auto& c = candidate_at(*requests[i].instance, requests[i].candidate);
      const long long id = next_req_id_++;
      nlohmann::json j = {{"req_id", id}, {"source", requests[i].instance->source}, {"text", c.text}};
      outgoing += j.dump();
      outgoing += '\n';
      pending.emplace(id, i);
    }
    messages_sent_ += requests.size();

    std::size_t written = 0;
    try {
      exchange(requests, outgoing, written, pending, out);
    } catch (...) {
      // A half-written request line would corrupt the stream; otherwise the
      // late answers to this batch are recognised and dropped.
      if (written < outgoing.size()) broken_ = true;
      for (const auto& [id, index] : pending) abandoned_.insert(id);
      throw;
    }
    return out;
  }

 private:
  void exchange(std::span<const ScoreRequest> requests, const std::string& outgoing, std::size_t& written,
                std::unordered_map<long long, std::size_t>& pending, std::vector<double>& out) {
    const auto deadline = std::chrono::steady_clock::now() + deadline_span();
    while (!pending.empty()) {
      pollfd fds[2];
      nfds_t nfds = 0;
      fds[nfds++] = {read_fd_, POLLIN, 0};
      const bool want_write = written < outgoing.size();
      if (want_write) fds[nfds++] = {write_fd_, POLLOUT, 0};
      const int rc = ::poll(fds, nfds, remaining_ms(deadline));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorKind::oracle_protocol_error, std::string("poll: ") + std::strerror(errno));
      }
      if (rc == 0) {
        throw Error(ErrorKind::oracle_timeout, "oracle '" + name_ + "' did not answer " +
                                                   std::to_string(pending.size()) + " request(s) within " +
                                                   std::to_string(timeout_secs_) + " s");
      }
      if (want_write && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
        const ssize_t n = write_some(outgoing.data() + written, outgoing.size() - written);
        if (n < 0) throw Error(ErrorKind::oracle_protocol_error, "oracle connection closed while writing");
        written += static_cast<std::size_t>(n);
      }
      if (fds[0].revents & (POLLIN | POLLERR | POLLHUP)) {
        if (!fill_buffer()) throw Error(ErrorKind::oracle_protocol_error, "oracle closed the connection");
        while (auto line = take_line()) {
          auto [id, value] = parse_response(*line);
          auto it = pending.find(id);
          if (it == pending.end() && abandoned_.erase(id) > 0) continue;
          if (it == pending.end()) {
            throw Error(ErrorKind::oracle_protocol_error, "response for unknown req_id " + std::to_string(id));
          }
          if (!value) {
            const auto& r = requests[it->second];
            throw Error(ErrorKind::oracle_protocol_error, "oracle error for instance '" + r.instance->id +
                                                              "' candidate " + std::to_string(r.candidate) + ": " +
                                                              last_error_);
          }
          out[it->second] = *value;
          pending.erase(it);
        }
      }
    }
  }

  std::chrono::steady_clock::duration deadline_span() const {
    return std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(timeout_secs_));
  }

  static int remaining_ms(std::chrono::steady_clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    return left.count() <= 0 ? 0 : static_cast<int>(std::min<long long>(left.count(), 1 << 30));
  }

  void spawn(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) {
      throw Error(ErrorKind::oracle_protocol_error, std::string("pipe: ") + std::strerror(errno));
    }
    pid_ = ::fork();
    if (pid_ < 0) throw Error(ErrorKind::oracle_protocol_error, std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    ::fcntl(write_fd_, F_SETFL, ::fcntl(write_fd_, F_GETFL) | O_NONBLOCK);
    ::fcntl(write_fd_, F_SETFD, FD_CLOEXEC);
    ::fcntl(read_fd_, F_SETFD, FD_CLOEXEC);
  }

  void connect_tcp(std::string host, const std::string& port) {
    if (host.size() > 2 && host.front() == '[') host = host.substr(1, host.size() - 2);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
      throw Error(ErrorKind::oracle_protocol_error, "resolve " + host + ": " + ::gai_strerror(rc));
    }
    int fd = -1;
    for (addrinfo* p = res; p; p = p->ai_next) {
      fd = ::socket(p->ai_family, p->ai_socktype | SOCK_CLOEXEC, p->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw Error(ErrorKind::oracle_protocol_error, "cannot connect to " + host + ":" + port);
    socket_ = true;
    read_fd_ = fd;
    write_fd_ = fd;
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK);
  }

  ssize_t write_some(const char* data, std::size_t len) {
    for (;;) {
      const ssize_t n = socket_ ? ::send(write_fd_, data, len, MSG_NOSIGNAL) : ::write(write_fd_, data, len);
      if (n >= 0) return n;
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) return 0;
      return -1;
    }
  }

  bool fill_buffer() {
    char chunk[65536];
    for (;;) {
      const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
      if (n > 0) {
        buffer_.append(chunk, static_cast<std::size_t>(n));
        return true;
      }
      if (n == 0) return false;
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) return true;
      return false;
    }
  }

  std::optional<std::string> take_line() {
    const auto pos = buffer_.find('\n');
    if (pos == std::string::npos) return std::nullopt;
    std::string line = buffer_.substr(0, pos);
    buffer_.erase(0, pos + 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  /// Returns (req_id, score) or (req_id, nullopt) for an error response.
  std::pair<long long, std::optional<double>> parse_response(const std::string& line) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorKind::oracle_protocol_error, "malformed response line: " + line);
    }
    if (!j.is_object() || !j.contains("req_id") || !j["req_id"].is_number_integer()) {
      throw Error(ErrorKind::oracle_protocol_error, "response without integer req_id: " + line);
    }
    const long long id = j["req_id"].get<long long>();
    if (auto e = j.find("error"); e != j.end()) {
      last_error_ = e->is_string() ? e->get<std::string>() : e->dump();
      return {id, std::nullopt};
    }
    auto s = j.find("score");
    if (s == j.end() || !s->is_number()) throw Error(ErrorKind::oracle_protocol_error, "response without score: " + line);
    return {id, s->get<double>()};
  }

  void handshake() {
    const auto deadline = std::chrono::steady_clock::now() + deadline_span();
    for (;;) {
      if (auto line = take_line()) {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(*line);
        } catch (const nlohmann::json::exception&) {
          throw Error(ErrorKind::oracle_protocol_error, "malformed handshake: " + *line);
        }
        if (!j.is_object() || !j.contains("ready")) throw Error(ErrorKind::oracle_protocol_error, "bad handshake: " + *line);
        if (!j["ready"].get<bool>()) {
          throw Error(ErrorKind::oracle_protocol_error,
                      "oracle not ready: " + (j.contains("error") ? j["error"].dump() : std::string("no reason")));
        }
        name_ = j.value("name", std::string("external"));
        return;
      }
      pollfd fd{read_fd_, POLLIN, 0};
      const int rc = ::poll(&fd, 1, remaining_ms(deadline));
      if (rc < 0 && errno == EINTR) continue;
      if (rc <= 0) throw Error(ErrorKind::oracle_timeout, "no handshake from oracle");
      if (!fill_buffer()) throw Error(ErrorKind::oracle_protocol_error, "oracle exited before handshake");
    }
  }

  void shutdown() {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    write_fd_ = read_fd_ = -1;
    if (pid_ > 0) {
      for (int i = 0; i < 100; ++i) {
        if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
          pid_ = -1;
          return;
        }
        ::usleep(10000);
      }
      ::kill(pid_, SIGTERM);
      ::waitpid(pid_, nullptr, 0);
      pid_ = -1;
    }
  }

  double timeout_secs_;
  std::string name_ = "external";
  pid_t pid_ = -1;
  int read_fd_ = -1;
  int write_fd_ = -1;
  bool socket_ = false;
  bool broken_ = false;
  std::unordered_set<long long> abandoned_;
  std::string buffer_;
  std::string last_error_;
  long long next_req_id_ = 0;
  std::size_t messages_sent_ = 0;
  mutable std::mutex mutex_;
};

}  // namespace bayesrank

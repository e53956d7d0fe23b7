#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "test_util.hpp"

using namespace bayesrank;

#ifndef STUB_ORACLE_PATH
#error "STUB_ORACLE_PATH must point at the stub oracle executable"
#endif

namespace {

class ExternalScorerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new std::filesystem::path(testutil::temp_dir("external"));
    auto ds = testutil::synthetic(3, 400, 21);
    // A candidate the error mode refuses to score.
    ds.instances[2].raw_candidates[5].text = "BAD candidate";
    finalize_instance(ds.instances[2]);
    data_ = new Dataset(ds);
    save_dataset((*dir_ / "data.jsonl").string(), ds);
  }
  static void TearDownTestSuite() {
    std::filesystem::remove_all(*dir_);
    delete dir_;
    delete data_;
  }

  static std::string command(const std::string& extra = {}) {
    return std::string(STUB_ORACLE_PATH) + " " + (*dir_ / "data.jsonl").string() + " " + extra;
  }

  static std::vector<ScoreRequest> requests(std::size_t n) {
    std::vector<ScoreRequest> out;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& inst = data_->instances[i % 3];
      out.push_back({&inst, (i * 7) % inst.size()});
    }
    return out;
  }

  static inline std::filesystem::path* dir_ = nullptr;
  static inline Dataset* data_ = nullptr;
};

}  // namespace

TEST_F(ExternalScorerTest, HandshakeAndEchoRoundTrip) {
  ExternalScorer s(command(), 10.0);
  EXPECT_EQ(s.name(), "stub-logprob");
  EXPECT_EQ(s.kind(), ScorerKind::external);
  const auto& inst = data_->instances[0];
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(s.score(inst, i), inst.unique_candidates[i].logprob_avg, 1e-6);
  EXPECT_TRUE(s.score_batch({}).empty());
}

TEST_F(ExternalScorerTest, ThousandRequestBatchEqualsIndividualCalls) {
  const auto count_file = (*dir_ / "count.txt").string();
  std::filesystem::remove(count_file);
  const auto reqs = requests(1000);
  std::vector<double> batch;
  {
    ExternalScorer s(command("--count-file " + count_file), 10.0);
    batch = s.score_batch(reqs);
    EXPECT_EQ(s.messages_sent(), 1000u);
  }
  ASSERT_EQ(batch.size(), 1000u);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    EXPECT_EQ(batch[i], reqs[i].instance->unique_candidates[reqs[i].candidate].logprob_avg) << i;
  }
  std::ifstream in(count_file);
  long received = -1;
  in >> received;
  EXPECT_EQ(received, 1000);

  ExternalScorer single(command(), 10.0);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(single.score(*reqs[i].instance, reqs[i].candidate), batch[i]);
}

TEST_F(ExternalScorerTest, OutOfOrderResponsesAreMatchedByReqId) {
  ExternalScorer s(command("--mode reverse"), 10.0);
  const auto reqs = requests(300);
  const auto got = s.score_batch(reqs);
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    EXPECT_EQ(got[i], reqs[i].instance->unique_candidates[reqs[i].candidate].logprob_avg);
  }
  EXPECT_EQ(s.score_batch(reqs), got);
}

TEST_F(ExternalScorerTest, ErrorResponseNamesTheFailingRequest) {
  ExternalScorer s(command("--mode error"), 10.0);
  const auto& bad = data_->instances[2];
  std::vector<ScoreRequest> reqs{{&bad, 0}, {&bad, 5}, {&bad, 6}};
  try {
    s.score_batch(reqs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::oracle_protocol_error);
    EXPECT_NE(std::string(e.what()).find("candidate 5"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find(bad.id), std::string::npos) << e.what();
  }
  // Late answers to the failed batch must not confuse the next one.
  const std::vector<ScoreRequest> ok{{&bad, 1}, {&bad, 2}};
  const auto got = s.score_batch(ok);
  EXPECT_EQ(got[0], bad.unique_candidates[1].logprob_avg);
  EXPECT_EQ(got[1], bad.unique_candidates[2].logprob_avg);
}

TEST_F(ExternalScorerTest, GarbageResponseIsProtocolError) {
  ExternalScorer s(command("--mode garbage"), 10.0);
  try {
    s.score(data_->instances[0], 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::oracle_protocol_error);
    EXPECT_EQ(exit_code(e.kind()), 3);
  }
}

TEST_F(ExternalScorerTest, SilentOracleTimesOut) {
  ExternalScorer s(command("--mode silent"), 0.3);
  const auto start = std::chrono::steady_clock::now();
  try {
    s.score(data_->instances[0], 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::oracle_timeout);
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 5.0);
}

TEST_F(ExternalScorerTest, NotReadyHandshakeFails) {
  try {
    ExternalScorer s(command("--mode not-ready"), 5.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::oracle_protocol_error);
  }
}

TEST_F(ExternalScorerTest, OracleExitMidBatchIsProtocolError) {
  ExternalScorer s(command("--mode exit-after --after 3"), 5.0);
  try {
    s.score_batch(requests(10));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::oracle_protocol_error);
  }
}

TEST_F(ExternalScorerTest, MissingCommandFails) {
  EXPECT_THROW(ExternalScorer("/nonexistent/oracle-binary", 2.0), Error);
}

TEST_F(ExternalScorerTest, TcpEndpoint) {
  const auto port_file = (*dir_ / "port.txt").string();
  std::filesystem::remove(port_file);
  std::thread server([&] { std::system((command("--port-file " + port_file) + " >/dev/null 2>&1").c_str()); });
  std::string port;
  for (int i = 0; i < 200 && port.empty(); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
    std::ifstream in(port_file);
    in >> port;
  }
  ASSERT_FALSE(port.empty());
  {
    ExternalScorer s("127.0.0.1:" + port, 10.0);
    const auto reqs = requests(200);
    const auto got = s.score_batch(reqs);
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      EXPECT_EQ(got[i], reqs[i].instance->unique_candidates[reqs[i].candidate].logprob_avg);
    }
  }
  server.join();
}

TEST_F(ExternalScorerTest, TimeoutFromEnvironment) {
  ::setenv("BAYESRANK_ORACLE_TIMEOUT_SECS", "2.5", 1);
  EXPECT_EQ(oracle_timeout_from_env(), 2.5);
  ::setenv("BAYESRANK_ORACLE_TIMEOUT_SECS", "junk", 1);
  EXPECT_EQ(oracle_timeout_from_env(), kDefaultOracleTimeoutSecs);
  ::unsetenv("BAYESRANK_ORACLE_TIMEOUT_SECS");
  EXPECT_EQ(oracle_timeout_from_env(), kDefaultOracleTimeoutSecs);
}

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cwgrpo/kb_synth.hpp"
#include "cwgrpo/round_signals.hpp"
#include "cwgrpo/search_env.hpp"

namespace cwgrpo {

/// Wire protocol, one search round per request (idempotent):
///   request  {"trajectory_id", "round_index", "question", "context_summary",
///             "query", "retrieved_docs"}
///   response {"u": 0|1, "v": 0|1}
std::string remote_judge_request(const Trajectory& trajectory, int t, const World& world);

/// Nullopt unless the body is an object with integer u and v in {0, 1}.
std::optional<RoundSignals> parse_remote_judge_response(const std::string& body);

/// Natural-language rendering of a question's hop chain.
std::string question_text(const Question& q, const World& world);

struct RemoteJudgeConfig {
  std::string base_url = "http://127.0.0.1:8080";  // scheme://host:port
  std::string path = "/judge";
  int timeout_ms = 5000;
  int max_in_flight = 4;
};

struct RemoteJudgeResult {
  std::vector<std::vector<RoundSignals>> signals;  // per trajectory, length T - 1
  std::size_t fallbacks = 0;                       // rounds that fell back to p = 0
};

/// Client for an external judge service. Requests for all search rounds are
/// issued with at most `max_in_flight` outstanding and joined back by
/// (trajectory, t). A timeout, transport error or malformed response yields
/// u = v = p = 0 for that round and a warning on stderr.
class RemoteJudge {
 public:
  explicit RemoteJudge(RemoteJudgeConfig config);

  RemoteJudgeResult judge(const std::vector<Trajectory>& trajectories, const World& world) const;

 private:
  RemoteJudgeConfig config_;
};

}  // namespace cwgrpo

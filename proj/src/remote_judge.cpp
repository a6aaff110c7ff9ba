#include "cwgrpo/remote_judge.hpp"

#include <algorithm>
#include <atomic>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace cwgrpo {

namespace {

using nlohmann::json;

std::string doc_text(const World& world, DocId d) {
  std::string s;
  for (const auto& tok : world.documents.at(d).tokens) {
    if (!s.empty()) s.push_back(' ');
    s += tok;
  }
  return s;
}

std::string query_text(const World& world, const QueryAction& q) {
  return world.entities.at(q.entity).name + " " + world.relations.at(q.relation);
}

}  // namespace

std::string question_text(const Question& q, const World& world) {
  std::string s = "what is";
  for (auto it = q.hop_chain.rbegin(); it != q.hop_chain.rend(); ++it) s += " the " + world.relations[world.facts[*it].relation] + " of";
  s += " " + world.entities.at(q.seed_entity).name;
  return s;
}

std::string remote_judge_request(const Trajectory& traj, int t, const World& world) {
  if (t < 1 || t >= traj.length()) throw std::out_of_range("only search rounds 1 <= t < T are judged");
  const auto& round = traj.rounds[static_cast<std::size_t>(t - 1)];
  std::ostringstream summary;
  for (int i = 1; i < t; ++i) {
    const auto& prior = traj.rounds[static_cast<std::size_t>(i - 1)];
    summary << "round " << i << ": searched '" << query_text(world, std::get<QueryAction>(prior.action)) << "' and read";
    for (DocId d : prior.retrieved) summary << " [" << doc_text(world, d) << "]";
    summary << "\n";
  }
  json docs = json::array();
  for (DocId d : round.retrieved) docs.push_back(doc_text(world, d));
  json j{{"trajectory_id", traj.trajectory_id},
         {"round_index", t},
         {"question", question_text(world.question(traj.question_id), world)},
         {"context_summary", summary.str()},
         {"query", query_text(world, std::get<QueryAction>(round.action))},
         {"retrieved_docs", docs}};
  return j.dump();
}

std::optional<RoundSignals> parse_remote_judge_response(const std::string& body) {
  const auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  auto bit = [&](const char* key) -> std::optional<int> {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer()) return std::nullopt;
    const auto v = it->get<long long>();
    if (v != 0 && v != 1) return std::nullopt;
    return static_cast<int>(v);
  };
  auto u = bit("u");
  auto v = bit("v");
  if (!u || !v) return std::nullopt;
  return RoundSignals::make(*u, *v);
}

RemoteJudge::RemoteJudge(RemoteJudgeConfig config) : config_(std::move(config)) {
  if (config_.max_in_flight < 1) throw std::invalid_argument("max_in_flight must be at least 1");
}

RemoteJudgeResult RemoteJudge::judge(const std::vector<Trajectory>& trajectories, const World& world) const {
  struct Job {
    std::size_t trajectory;
    int t;
  };
  std::vector<Job> jobs;
  RemoteJudgeResult result;
  result.signals.resize(trajectories.size());
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const int search = std::max(0, trajectories[i].length() - 1);
    result.signals[i].resize(static_cast<std::size_t>(search));
    for (int t = 1; t <= search; ++t) jobs.push_back({i, t});
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> fallbacks{0};
  std::mutex log_mutex;
  auto worker = [&] {
    httplib::Client client(config_.base_url);
    const auto secs = config_.timeout_ms / 1000;
    const auto usecs = (config_.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      const auto& job = jobs[k];
      const auto& traj = trajectories[job.trajectory];
      std::optional<RoundSignals> signals;
      auto res = client.Post(config_.path, remote_judge_request(traj, job.t, world), "application/json");
      if (res && res->status == 200) signals = parse_remote_judge_response(res->body);
      if (!signals) {
        ++fallbacks;
        std::lock_guard lock(log_mutex);
        std::cerr << "warning: remote judge gave no usable verdict for trajectory " << traj.trajectory_id << " round "
                  << job.t << "; using p=0\n";
      }
      result.signals[job.trajectory][static_cast<std::size_t>(job.t - 1)] = signals.value_or(RoundSignals{});
    }
  };

  const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(config_.max_in_flight), jobs.size());
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  pool.clear();
  result.fallbacks = fallbacks.load();
  return result;
}

}  // namespace cwgrpo

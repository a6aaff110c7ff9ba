#include "cwgrpo/trajectory_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace cwgrpo {

namespace {

using nlohmann::json;

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <typename T, typename Parse>
std::vector<T> read_lines(const std::string& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<T> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse(line));
  }
  return out;
}

[[noreturn]] void schema_error(const std::exception& e, const char* what) {
  throw std::invalid_argument(std::string(what) + ": " + e.what());
}

}  // namespace

std::string trajectory_to_jsonl(const Trajectory& traj) {
  json j;
  j["trajectory_id"] = traj.trajectory_id;
  j["question_id"] = traj.question_id;
  j["final_answer"] = traj.final_answer;
  j["reward"] = traj.reward;
  j["truncated"] = traj.truncated;
  j["rounds"] = json::array();
  for (std::size_t i = 0; i < traj.rounds.size(); ++i) {
    const auto& round = traj.rounds[i];
    json r;
    r["t"] = static_cast<int>(i) + 1;
    if (const auto* q = std::get_if<QueryAction>(&round.action)) {
      r["query"] = {{"entity", q->entity}, {"relation", q->relation}};
    } else {
      r["answer"] = std::get<AnswerAction>(round.action).text;
    }
    r["retrieved_doc_ids"] = round.retrieved;
    if (i < traj.signals.size()) {
      r["u"] = traj.signals[i].u;
      r["v"] = traj.signals[i].v;
      r["p"] = traj.signals[i].p;
    }
    j["rounds"].push_back(std::move(r));
  }
  return j.dump();
}

Trajectory trajectory_from_jsonl(const std::string& line, const SearchEnv* env) {
  Trajectory traj;
  std::vector<Action> actions;
  std::vector<std::vector<DocId>> retrieved;
  try {
    const auto j = json::parse(line);
    traj.trajectory_id = j.at("trajectory_id").get<std::int64_t>();
    traj.question_id = j.at("question_id").get<int>();
    traj.final_answer = j.at("final_answer").get<std::string>();
    traj.reward = j.at("reward").get<double>();
    traj.truncated = j.value("truncated", false);
    const auto& rounds = j.at("rounds");
    bool any_signal = false;
    for (std::size_t i = 0; i < rounds.size(); ++i) {
      const auto& r = rounds[i];
      if (r.at("t").get<int>() != static_cast<int>(i) + 1) throw std::invalid_argument("round indices must be 1..T in order");
      if (r.contains("query")) {
        actions.emplace_back(QueryAction{r["query"].at("entity").get<int>(), r["query"].at("relation").get<int>()});
      } else {
        actions.emplace_back(AnswerAction{r.at("answer").get<std::string>()});
      }
      retrieved.push_back(r.at("retrieved_doc_ids").get<std::vector<DocId>>());
      if (r.contains("u")) {
        any_signal = true;
        const int u = r.at("u").get<int>(), v = r.at("v").get<int>();
        if ((u != 0 && u != 1) || (v != 0 && v != 1)) throw std::invalid_argument("u and v must be 0 or 1");
        auto s = RoundSignals::make(u, v);
        if (r.contains("p") && r["p"].get<int>() != s.p) throw std::invalid_argument("p must equal u * v");
        traj.signals.push_back(s);
      } else if (any_signal && i + 1 < rounds.size()) {
        throw std::invalid_argument("judged trajectory is missing signals on a search round");
      }
    }
    if (any_signal && traj.signals.size() + 1 != rounds.size())
      throw std::invalid_argument("judged trajectory must carry signals on exactly the search rounds");
  } catch (const json::exception& e) {
    schema_error(e, "malformed trajectory line");
  }

  if (env == nullptr) {
    for (std::size_t i = 0; i < actions.size(); ++i) {
      State s;
      s.question_id = traj.question_id;
      s.round = static_cast<int>(i) + 1;
      traj.rounds.push_back({std::move(s), actions[i], retrieved[i]});
    }
    return traj;
  }

  Episode episode(*env, traj.question_id, traj.trajectory_id);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    episode.act(actions[i]);
    if (episode.trajectory().rounds.back().retrieved != retrieved[i])
      throw std::invalid_argument("logged retrieval does not match the world");
  }
  auto replayed = std::move(episode).take();
  if (replayed.reward != traj.reward || replayed.final_answer != traj.final_answer)
    throw std::invalid_argument("logged outcome does not match the world");
  replayed.signals = std::move(traj.signals);
  return replayed;
}

std::vector<Trajectory> read_trajectories(std::istream& in, const SearchEnv* env) {
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(trajectory_from_jsonl(line, env));
  }
  return out;
}

std::vector<Trajectory> read_trajectories(const std::string& path, const SearchEnv* env) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_trajectories(in, env);
}

void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajectories) {
  for (const auto& t : trajectories) out << trajectory_to_jsonl(t) << '\n';
}

std::string advantage_to_jsonl(const AdvantageRecord& r) {
  json j;
  j["trajectory_id"] = r.trajectory_id;
  j["question_id"] = r.question_id;
  j["step"] = r.step;
  j["reward"] = r.reward;
  j["A_outcome"] = r.credit.profile.outcome;
  j["c"] = to_std(r.credit.weights);
  j["A_rounds"] = to_std(r.credit.profile.rounds);
  j["A_answer"] = r.credit.profile.answer;
  j["alpha"] = r.alpha.to_string();
  j["mode"] = std::string(to_string(r.mode));
  return j.dump();
}

AdvantageRecord advantage_from_jsonl(const std::string& line) {
  try {
    const auto j = json::parse(line);
    AdvantageRecord r;
    r.trajectory_id = j.at("trajectory_id").get<std::int64_t>();
    r.question_id = j.at("question_id").get<int>();
    r.step = j.value("step", 0);
    r.reward = j.at("reward").get<double>();
    r.credit.profile.outcome = j.at("A_outcome").get<double>();
    r.credit.weights = from_std(j.at("c").get<std::vector<double>>());
    r.credit.profile.rounds = from_std(j.at("A_rounds").get<std::vector<double>>());
    r.credit.profile.answer = j.at("A_answer").get<double>();
    const auto& alpha = j.at("alpha");
    r.alpha = alpha.is_string() ? Sharpness::parse(alpha.get<std::string>()) : Sharpness::finite(alpha.get<double>());
    r.mode = ablation_from_string(j.at("mode").get<std::string>());
    if (r.credit.weights.size() != r.credit.profile.rounds.size())
      throw std::invalid_argument("c and A_rounds differ in length");
    return r;
  } catch (const json::exception& e) {
    schema_error(e, "malformed advantage line");
  }
}

std::vector<AdvantageRecord> read_advantages(const std::string& path) {
  return read_lines<AdvantageRecord>(path, advantage_from_jsonl);
}

std::string annotation_to_jsonl(const GoldAnnotation& a) {
  json j{{"trajectory_id", a.trajectory_id},
         {"t", a.t},
         {"u", a.u_gold},
         {"v", a.v_gold},
         {"confidence", std::string(to_string(a.confidence))}};
  return j.dump();
}

GoldAnnotation annotation_from_jsonl(const std::string& line) {
  try {
    const auto j = json::parse(line);
    GoldAnnotation a;
    a.trajectory_id = j.at("trajectory_id").get<std::int64_t>();
    a.t = j.at("t").get<int>();
    a.u_gold = j.at("u").get<int>();
    a.v_gold = j.at("v").get<int>();
    if ((a.u_gold != 0 && a.u_gold != 1) || (a.v_gold != 0 && a.v_gold != 1))
      throw std::invalid_argument("u and v must be 0 or 1");
    a.confidence = confidence_from_string(j.at("confidence").get<std::string>());
    return a;
  } catch (const json::exception& e) {
    schema_error(e, "malformed annotation line");
  }
}

std::vector<GoldAnnotation> read_annotations(const std::string& path) {
  return read_lines<GoldAnnotation>(path, annotation_from_jsonl);
}

}  // namespace cwgrpo

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cwgrpo/advantage.hpp"
#include "cwgrpo/judge.hpp"
#include "cwgrpo/search_env.hpp"

namespace cwgrpo {

/// Trajectory log line:
///   {"trajectory_id", "question_id", "rounds": [{"t", "query": {"entity",
///   "relation"} | "answer", "retrieved_doc_ids", ["u", "v", "p"]}],
///   "final_answer", "reward", "truncated"}
/// u, v, p appear on search rounds once the trajectory has been judged.
std::string trajectory_to_jsonl(const Trajectory& trajectory);

/// Parses one line. States are not serialized: when `env` is given they are
/// rebuilt by replaying the actions, and the replayed retrievals must match
/// the logged ones; otherwise each round's state only carries question id and
/// round index.
Trajectory trajectory_from_jsonl(const std::string& line, const SearchEnv* env = nullptr);

std::vector<Trajectory> read_trajectories(std::istream& in, const SearchEnv* env = nullptr);
std::vector<Trajectory> read_trajectories(const std::string& path, const SearchEnv* env = nullptr);
void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajectories);

/// Advantage dump line for one trajectory.
struct AdvantageRecord {
  std::int64_t trajectory_id = 0;
  QuestionId question_id = 0;
  int step = 0;
  double reward = 0.0;
  CreditAssignment credit;
  Sharpness alpha = Sharpness::infinite();
  AblationMode mode = AblationMode::Full;
};

std::string advantage_to_jsonl(const AdvantageRecord& record);
AdvantageRecord advantage_from_jsonl(const std::string& line);
std::vector<AdvantageRecord> read_advantages(const std::string& path);

/// Gold annotation line: {"trajectory_id", "t", "u", "v", "confidence"}.
std::string annotation_to_jsonl(const GoldAnnotation& a);
GoldAnnotation annotation_from_jsonl(const std::string& line);
std::vector<GoldAnnotation> read_annotations(const std::string& path);

}  // namespace cwgrpo

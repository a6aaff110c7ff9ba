#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cwgrpo/kb_synth.hpp"
#include "cwgrpo/round_signals.hpp"

namespace cwgrpo {

struct EnvConfig {
  int k = 3;            // retrieval depth
  int max_rounds = 10;  // round cap

  void validate() const;
};

struct QueryAction {
  EntityId entity = 0;
  RelationId relation = 0;

  friend auto operator<=>(const QueryAction&, const QueryAction&) = default;
};

struct AnswerAction {
  std::string text;

  friend bool operator==(const AnswerAction&, const AnswerAction&) = default;
};

using Action = std::variant<QueryAction, AnswerAction>;

inline bool is_answer(const Action& a) { return std::holds_alternative<AnswerAction>(a); }

struct ContextEntry {
  QueryAction query;
  std::vector<DocId> retrieved;

  friend bool operator==(const ContextEntry&, const ContextEntry&) = default;
};

/// Agent-visible state s^t. `known_facts` holds every fact carried by a gold
/// document retrieved so far; `mentioned` every entity named in the seed or in
/// any retrieved document. Both are sorted.
struct State {
  QuestionId question_id = 0;
  int round = 1;
  std::vector<ContextEntry> context;
  std::vector<FactId> known_facts;
  std::vector<EntityId> mentioned;

  bool knows(FactId f) const;
  bool issued(const QueryAction& q) const;

  friend bool operator==(const State&, const State&) = default;
};

struct Round {
  State state;
  Action action;
  std::vector<DocId> retrieved;  // empty for the answer round
};

/// One episode. If the round cap is hit without an answer the trajectory is
/// truncated: R = 0 and the final round is treated as the answer round.
struct Trajectory {
  std::int64_t trajectory_id = 0;
  QuestionId question_id = 0;
  std::vector<Round> rounds;
  std::string final_answer;
  double reward = 0.0;
  bool truncated = false;
  std::vector<RoundSignals> signals;  // length T - 1 once judged, else empty

  int length() const { return static_cast<int>(rounds.size()); }
  int search_rounds() const { return length() - 1; }
  bool judged() const { return !signals.empty() || length() <= 1; }
};

/// 1 iff the lowercased, whitespace-trimmed strings are equal.
int exact_match(std::string_view prediction, std::string_view gold);

/// Token-overlap retrieval over (entity name, relation) query tokens. A
/// document scores the number of its tokens that match a query token; ranked
/// by descending score, ties by ascending doc id; zero-score documents are
/// never returned.
std::vector<DocId> retrieve(const World& world, std::string_view entity_token, std::string_view relation_token, int k);
std::vector<DocId> retrieve(const World& world, const QueryAction& query, int k);

struct Terminal {
  std::string final_answer;
  double reward = 0.0;
  bool truncated = false;
};

struct StepOutcome {
  std::vector<DocId> retrieved;
  std::variant<State, Terminal> next;

  bool terminal() const { return std::holds_alternative<Terminal>(next); }
};

/// Episodic search environment over a read-only world. Retrieval results for
/// every (entity, relation) pair are computed once at construction.
class SearchEnv {
 public:
  SearchEnv(const World& world, EnvConfig config);

  const World& world() const { return *world_; }
  const EnvConfig& config() const { return config_; }

  State reset(QuestionId question_id) const;
  StepOutcome step(const State& state, const Action& action) const;
  std::span<const DocId> retrieve(const QueryAction& query) const;

 private:
  const World* world_;
  EnvConfig config_;
  std::vector<std::vector<DocId>> cache_;  // entity * num_relations + relation
};

/// Stateful driver that accumulates rounds into a Trajectory.
class Episode {
 public:
  Episode(const SearchEnv& env, QuestionId question_id, std::int64_t trajectory_id = 0);

  const State& state() const { return state_; }
  bool done() const { return done_; }

  /// Throws std::logic_error once the episode has terminated.
  void act(const Action& action);

  const Trajectory& trajectory() const { return trajectory_; }
  Trajectory take() && { return std::move(trajectory_); }

 private:
  const SearchEnv* env_;
  State state_;
  Trajectory trajectory_;
  bool done_ = false;
};

}  // namespace cwgrpo

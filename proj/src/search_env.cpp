#include "cwgrpo/search_env.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_map>

namespace cwgrpo {

namespace {

std::string normalize(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  auto begin = std::find_if_not(s.begin(), s.end(), is_space);
  auto end = std::find_if_not(s.rbegin(), std::string_view::reverse_iterator(begin), is_space).base();
  std::string out(begin, end);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

template <typename T>
void insert_sorted(std::vector<T>& v, T x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  if (it == v.end() || *it != x) v.insert(it, x);
}

}  // namespace

void EnvConfig::validate() const {
  if (k < 1) throw std::invalid_argument("retrieval depth k must be at least 1");
  if (max_rounds < 2) throw std::invalid_argument("max_rounds must be at least 2");
}

bool State::knows(FactId f) const { return std::binary_search(known_facts.begin(), known_facts.end(), f); }

bool State::issued(const QueryAction& q) const {
  return std::any_of(context.begin(), context.end(), [&](const ContextEntry& e) { return e.query == q; });
}

int exact_match(std::string_view prediction, std::string_view gold) {
  return normalize(prediction) == normalize(gold) ? 1 : 0;
}

std::vector<DocId> retrieve(const World& world, std::string_view entity_token, std::string_view relation_token, int k) {
  if (k < 1) throw std::invalid_argument("retrieval depth k must be at least 1");
  std::unordered_map<DocId, int> score;
  auto add = [&](std::string_view tok) {
    for (const auto& p : world.postings(tok)) score[p.doc] += p.count;
  };
  add(entity_token);
  if (relation_token != entity_token) add(relation_token);

  std::vector<std::pair<int, DocId>> ranked;
  ranked.reserve(score.size());
  for (auto [d, s] : score) ranked.emplace_back(-s, d);
  const auto keep = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k));
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end());
  std::vector<DocId> out;
  for (std::size_t i = 0; i < keep; ++i) out.push_back(ranked[i].second);
  return out;
}

std::vector<DocId> retrieve(const World& world, const QueryAction& query, int k) {
  return retrieve(world, world.entities.at(query.entity).name, world.relations.at(query.relation), k);
}

SearchEnv::SearchEnv(const World& world, EnvConfig config) : world_(&world), config_(config) {
  config_.validate();
  cache_.resize(static_cast<std::size_t>(world.num_entities()) * world.num_relations());
  for (EntityId e = 0; e < world.num_entities(); ++e)
    for (RelationId r = 0; r < world.num_relations(); ++r)
      cache_[static_cast<std::size_t>(e) * world.num_relations() + r] = cwgrpo::retrieve(world, QueryAction{e, r}, config_.k);
}

std::span<const DocId> SearchEnv::retrieve(const QueryAction& q) const {
  if (q.entity < 0 || q.entity >= world_->num_entities() || q.relation < 0 || q.relation >= world_->num_relations())
    throw std::out_of_range("query references an unknown entity or relation");
  return cache_[static_cast<std::size_t>(q.entity) * world_->num_relations() + q.relation];
}

State SearchEnv::reset(QuestionId question_id) const {
  const auto& q = world_->question(question_id);
  State s;
  s.question_id = question_id;
  s.round = 1;
  s.mentioned = {q.seed_entity};
  return s;
}

StepOutcome SearchEnv::step(const State& state, const Action& action) const {
  const auto& q = world_->question(state.question_id);
  if (state.round < 1 || state.round > config_.max_rounds) throw std::logic_error("state is past the round cap");

  if (const auto* answer = std::get_if<AnswerAction>(&action)) {
    return {{}, Terminal{answer->text, static_cast<double>(exact_match(answer->text, q.gold_answer)), false}};
  }

  const auto& query = std::get<QueryAction>(action);
  auto docs = retrieve(query);
  std::vector<DocId> retrieved(docs.begin(), docs.end());
  if (state.round == config_.max_rounds) return {std::move(retrieved), Terminal{"", 0.0, true}};

  State next = state;
  next.round = state.round + 1;
  next.context.push_back({query, retrieved});
  for (DocId d : retrieved) {
    if (const auto& carries = world_->documents[d].carries) insert_sorted(next.known_facts, *carries);
    for (EntityId e : world_->mentions(d)) insert_sorted(next.mentioned, e);
  }
  return {std::move(retrieved), std::move(next)};
}

Episode::Episode(const SearchEnv& env, QuestionId question_id, std::int64_t trajectory_id)
    : env_(&env), state_(env.reset(question_id)) {
  trajectory_.trajectory_id = trajectory_id;
  trajectory_.question_id = question_id;
}

void Episode::act(const Action& action) {
  if (done_) throw std::logic_error("episode has already terminated");
  auto outcome = env_->step(state_, action);
  trajectory_.rounds.push_back({state_, action, outcome.retrieved});
  if (auto* terminal = std::get_if<Terminal>(&outcome.next)) {
    trajectory_.final_answer = terminal->final_answer;
    trajectory_.reward = terminal->reward;
    trajectory_.truncated = terminal->truncated;
    done_ = true;
  } else {
    state_ = std::move(std::get<State>(outcome.next));
  }
}

}  // namespace cwgrpo

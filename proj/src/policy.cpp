#include "cwgrpo/policy.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace cwgrpo {

namespace {

namespace fx = features;

/// Hops resolved by walking known chain facts from the seed.
int resolved_hops(const State& state, const Question& q) {
  int h = 0;
  while (h < q.hops() && state.knows(q.hop_chain[h])) ++h;
  return h;
}

int round_bucket(int round) {
  if (round <= 3) return 0;
  if (round <= 6) return 1;
  return 2;
}

}  // namespace

Eigen::Index ActionSet::find(const Action& a) const {
  for (std::size_t i = 0; i < actions.size(); ++i)
    if (actions[i] == a) return static_cast<Eigen::Index>(i);
  return -1;
}

Eigen::VectorXd featurize(const State& state, const World& world) {
  const auto& q = world.question(state.question_id);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(fx::kState);
  bool all_known = true;
  for (int h = 0; h < q.hops(); ++h) {
    const bool known = state.knows(q.hop_chain[h]);
    f(h) = known ? 1.0 : 0.0;
    all_known = all_known && known;
  }
  f(fx::kAnswerDetermined) = all_known ? 1.0 : 0.0;
  f(fx::kRoundBucket + round_bucket(state.round)) = 1.0;
  f(fx::kProgress) = static_cast<double>(resolved_hops(state, q)) / q.hops();
  return f;
}

ActionSet action_set(const State& state, const World& world) {
  const auto& q = world.question(state.question_id);
  const Eigen::VectorXd shared = featurize(state, world);
  const int resolved = resolved_hops(state, q);
  const EntityId frontier = world.chain_entity(q, resolved);
  const bool complete = resolved == q.hops();
  const RelationId next_relation = complete ? -1 : world.facts[q.hop_chain[resolved]].relation;
  std::vector<bool> in_question(static_cast<std::size_t>(world.num_relations()), false);
  for (FactId f : q.hop_chain) in_question[world.facts[f].relation] = true;

  const auto n_rel = world.num_relations();
  const auto n_ent = static_cast<Eigen::Index>(state.mentioned.size());
  const Eigen::Index n = n_ent * n_rel + n_ent;

  ActionSet set;
  set.actions.reserve(static_cast<std::size_t>(n));
  set.features = Eigen::MatrixXd::Zero(n, fx::kDim);
  set.legal = Mask::Constant(n, true);

  Eigen::Index row = 0;
  for (EntityId e : state.mentioned) {
    for (RelationId r = 0; r < n_rel; ++r, ++row) {
      QueryAction query{e, r};
      auto phi = set.features.row(row).segment(fx::kQueryOffset, fx::kQueryBlock);
      phi(fx::kQueryBias) = 1.0;
      phi(fx::kQueryFrontier) = e == frontier ? 1.0 : 0.0;
      phi(fx::kQueryNextRelation) = r == next_relation ? 1.0 : 0.0;
      phi(fx::kQueryOnPath) = (e == frontier && r == next_relation) ? 1.0 : 0.0;
      phi(fx::kQueryRepeated) = state.issued(query) ? 1.0 : 0.0;
      phi(fx::kQueryInQuestion) = in_question[r] ? 1.0 : 0.0;
      phi(fx::kQuerySeed) = e == q.seed_entity ? 1.0 : 0.0;
      phi.tail(fx::kState) = shared.transpose();
      set.actions.emplace_back(query);
    }
  }
  for (EntityId e : state.mentioned) {
    auto phi = set.features.row(row).segment(fx::kAnswerOffset, fx::kAnswerBlock);
    phi(fx::kAnswerBias) = 1.0;
    phi(fx::kAnswerIsDetermined) = (complete && e == frontier) ? 1.0 : 0.0;
    phi(fx::kAnswerFrontier) = e == frontier ? 1.0 : 0.0;
    phi(fx::kAnswerSeed) = e == q.seed_entity ? 1.0 : 0.0;
    phi.tail(fx::kState) = shared.transpose();
    set.actions.emplace_back(AnswerAction{world.entities[e].name});
    ++row;
  }
  return set;
}

ActionDistribution action_dist(const Eigen::VectorXd& theta, const ActionSet& set) {
  ActionDistribution d;
  d.logits = set.features * theta;
  d.log_probs = masked_log_softmax(d.logits, set.legal);
  d.probs = probabilities(d.log_probs);
  return d;
}

ActionDistribution action_dist(const PolicyParams& params, const State& state, const World& world) {
  return action_dist(params.theta, action_set(state, world));
}

namespace {

void require_legal(const ActionSet& set, Eigen::Index action) {
  if (action < 0 || action >= set.size() || !set.legal(action))
    throw std::invalid_argument("action is not legal in this state");
}

Eigen::Index locate(const ActionSet& set, const Action& action) {
  auto i = set.find(action);
  require_legal(set, i);
  return i;
}

}  // namespace

double log_prob(const Eigen::VectorXd& theta, const ActionSet& set, Eigen::Index action) {
  require_legal(set, action);
  return action_dist(theta, set).log_probs(action);
}

double log_prob(const PolicyParams& params, const State& state, const Action& action, const World& world) {
  auto set = action_set(state, world);
  return log_prob(params.theta, set, locate(set, action));
}

Eigen::VectorXd grad_log_prob(const Eigen::VectorXd& theta, const ActionSet& set, Eigen::Index action) {
  require_legal(set, action);
  const auto dist = action_dist(theta, set);
  return set.features.row(action).transpose() - set.features.transpose() * dist.probs;
}

Eigen::VectorXd grad_log_prob(const PolicyParams& params, const State& state, const Action& action, const World& world) {
  auto set = action_set(state, world);
  return grad_log_prob(params.theta, set, locate(set, action));
}

Eigen::Index sample_index(const ActionDistribution& dist, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  Eigen::Index last_legal = -1;
  for (Eigen::Index i = 0; i < dist.probs.size(); ++i) {
    if (dist.probs(i) <= 0.0) continue;
    last_legal = i;
    cumulative += dist.probs(i);
    if (u < cumulative) return i;
  }
  // Rounding left the cumulative sum a hair below u.
  return last_legal;
}

Action sample_action(const PolicyParams& params, const State& state, const World& world, Rng& rng) {
  auto set = action_set(state, world);
  return set.actions[static_cast<std::size_t>(sample_index(action_dist(params.theta, set), rng))];
}

std::string serialize_params(const PolicyParams& params) {
  nlohmann::json j;
  j["shape"] = {params.theta.size()};
  j["theta"] = std::vector<double>(params.theta.data(), params.theta.data() + params.theta.size());
  return j.dump();
}

PolicyParams parse_params(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
    const auto theta = j.at("theta").get<std::vector<double>>();
    if (shape.size() != 1 || shape[0] != static_cast<Eigen::Index>(theta.size()) || shape[0] != features::kDim)
      throw std::invalid_argument("checkpoint shape does not match the policy feature map");
    PolicyParams p;
    p.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_params(const PolicyParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << serialize_params(params) << '\n';
}

PolicyParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_params(ss.str());
}

}  // namespace cwgrpo

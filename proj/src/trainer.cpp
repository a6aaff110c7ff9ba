#include "cwgrpo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cwgrpo/judge.hpp"

namespace cwgrpo {

void TrainConfig::validate() const {
  if (group_size < 2) throw std::invalid_argument("group_size must be at least 2");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (steps < 0) throw std::invalid_argument("steps must be non-negative");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw std::invalid_argument("clip_epsilon must lie in (0, 1)");
  if (!(kl_beta >= 0.0)) throw std::invalid_argument("kl_beta must be non-negative");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("learning_rate must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (!(ema_decay > 0.0 && ema_decay <= 1.0)) throw std::invalid_argument("ema_decay must lie in (0, 1]");
  env.validate();
}

std::vector<QuestionId> all_question_ids(const World& world) {
  std::vector<QuestionId> ids;
  for (const auto& q : world.questions) ids.push_back(q.question_id);
  return ids;
}

std::vector<SampledTrajectory> rollout_group(const PolicySnapshot& policy, const SearchEnv& env, QuestionId question_id,
                                             int group_size, std::uint64_t stream_seed, std::int64_t first_trajectory_id) {
  std::vector<SampledTrajectory> group;
  group.reserve(static_cast<std::size_t>(group_size));
  for (int m = 0; m < group_size; ++m) {
    Rng rng(derive_seed({stream_seed, static_cast<std::uint64_t>(question_id), static_cast<std::uint64_t>(m)}));
    Episode episode(env, question_id, first_trajectory_id + m);
    SampledTrajectory sample;
    while (!episode.done()) {
      auto set = action_set(episode.state(), env.world());
      const auto idx = sample_index(action_dist(policy.theta(), set), rng);
      episode.act(set.actions[static_cast<std::size_t>(idx)]);
      sample.chosen.push_back(idx);
      sample.action_sets.push_back(std::move(set));
    }
    sample.trajectory = std::move(episode).take();
    group.push_back(std::move(sample));
  }
  return group;
}

Eigen::VectorXd importance_ratios(const Eigen::VectorXd& theta, const PolicySnapshot& old, const Batch& batch) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(batch.triples.size()));
  for (std::size_t i = 0; i < batch.triples.size(); ++i) {
    const auto& tr = batch.triples[i];
    const auto& set = batch.states[tr.state];
    const double lp = action_dist(theta, set).log_probs(tr.action);
    const double lp_old = action_dist(old.theta(), set).log_probs(tr.action);
    r(static_cast<Eigen::Index>(i)) = std::exp(lp - lp_old);
  }
  return r;
}

LossAndGradient surrogate_loss(const Eigen::VectorXd& theta, const PolicySnapshot& old, const Batch& batch, double clip_epsilon) {
  LossAndGradient out{0.0, Eigen::VectorXd::Zero(theta.size())};
  if (batch.triples.empty()) return out;
  double objective = 0.0;
  for (const auto& tr : batch.triples) {
    const auto& set = batch.states.at(tr.state);
    if (tr.action < 0 || tr.action >= set.size() || !set.legal(tr.action))
      throw std::invalid_argument("triple references an illegal action");
    if (!std::isfinite(tr.advantage)) throw std::invalid_argument("advantage must be finite");

    const auto dist = action_dist(theta, set);
    const double lp_old = action_dist(old.theta(), set).log_probs(tr.action);
    const double ratio = std::exp(dist.log_probs(tr.action) - lp_old);
    const double unclipped = ratio * tr.advantage;
    const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * tr.advantage;
    objective += std::min(unclipped, clipped);
    if (unclipped <= clipped) {
      // d(r A) = A r d(log pi)
      out.gradient.noalias() += (tr.advantage * ratio) *
                                (set.features.row(tr.action).transpose() - set.features.transpose() * dist.probs);
    }
  }
  const double n = static_cast<double>(batch.triples.size());
  out.value = -objective / n;
  out.gradient /= -n;
  return out;
}

LossAndGradient kl_penalty(const Eigen::VectorXd& theta, const PolicySnapshot& old, std::span<const ActionSet> states) {
  LossAndGradient out{0.0, Eigen::VectorXd::Zero(theta.size())};
  if (states.empty()) return out;
  for (const auto& set : states) {
    const auto p = action_dist(theta, set);
    const auto q = action_dist(old.theta(), set);
    // Sum over the support of p only; 0 log 0 = 0.
    Eigen::VectorXd diff = Eigen::VectorXd::Zero(set.size());
    for (Eigen::Index a = 0; a < set.size(); ++a)
      if (p.probs(a) > 0.0) diff(a) = p.log_probs(a) - q.log_probs(a);
    const double kl = p.probs.dot(diff);
    out.value += kl;
    // grad = Phi^T [p o (diff - KL)]
    out.gradient.noalias() += set.features.transpose() * (p.probs.array() * (diff.array() - kl)).matrix();
  }
  const double n = static_cast<double>(states.size());
  out.value /= n;
  out.gradient /= n;
  return out;
}

void append_group(Batch& batch, std::vector<SampledTrajectory>& group, std::span<const CreditAssignment> credits) {
  if (credits.size() != group.size()) throw std::invalid_argument("one credit assignment per trajectory");
  for (std::size_t i = 0; i < group.size(); ++i) {
    auto& s = group[i];
    const auto& profile = credits[i].profile;
    const int T = s.trajectory.length();
    if (profile.rounds.size() != T - 1) throw std::invalid_argument("profile does not match trajectory length");
    for (int t = 0; t < T; ++t) {
      const double a = t < T - 1 ? profile.rounds(t) : profile.answer;
      batch.triples.push_back({batch.states.size(), s.chosen[static_cast<std::size_t>(t)], a});
      batch.states.push_back(std::move(s.action_sets[static_cast<std::size_t>(t)]));
    }
  }
}

std::vector<QuestionId> batch_questions(const World& world, int batch_size, std::uint64_t seed, int step) {
  auto pool = all_question_ids(world);
  Rng rng(derive_seed({seed, static_cast<std::uint64_t>(step), 0x62617463ULL}));
  rng.shuffle(pool);
  std::vector<QuestionId> out;
  for (int i = 0; i < batch_size; ++i) out.push_back(pool[static_cast<std::size_t>(i) % pool.size()]);
  return out;
}

TrainResult train(const World& world, const TrainConfig& config, const StepObserver& observer) {
  return train(world, config, PolicyParams::zeros(), observer);
}

TrainResult train(const World& world, const TrainConfig& config, PolicyParams initial, const StepObserver& observer) {
  config.validate();
  const SearchEnv env(world, config.env);
  TrainResult result{std::move(initial), {}};
  auto& params = result.params;
  const double lambda = config.ema_decay;

  for (int step = 0; step < config.steps; ++step) {
    const PolicySnapshot old = snapshot(params);
    const auto questions = batch_questions(world, config.batch_size, config.seed, step);

    Batch batch;
    std::vector<Trajectory> trajectories;
    std::vector<CreditAssignment> credits;
    double judged_u = 0.0, judged_v = 0.0, judged_rounds = 0.0;

    for (std::size_t b = 0; b < questions.size(); ++b) {
      const auto first_id = (static_cast<std::int64_t>(step) * config.batch_size + static_cast<std::int64_t>(b)) * config.group_size;
      const auto stream = derive_seed({config.seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(b)});
      auto group = rollout_group(old, env, questions[b], config.group_size, stream, first_id);

      std::vector<Trajectory> group_trajs;
      for (auto& s : group) {
        auto& traj = s.trajectory;
        if (traj.reward == 1.0 || config.judge_failed) {
          traj.signals = judge_trajectory(traj, world);
          for (const auto& sig : traj.signals) {
            judged_u += sig.u;
            judged_v += sig.v;
            judged_rounds += 1.0;
          }
        }
        group_trajs.push_back(traj);
      }
      auto group_credit = group_advantage_profiles(group_trajs, config.alpha, config.mode);

      append_group(batch, group, group_credit);
      for (auto& t : group_trajs) trajectories.push_back(std::move(t));
      for (auto& c : group_credit) credits.push_back(std::move(c));
    }

    double first_loss = 0.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      const auto surrogate = surrogate_loss(params.theta, old, batch, config.clip_epsilon);
      const auto kl = kl_penalty(params.theta, old, batch.states);
      if (epoch == 0) first_loss = surrogate.value + config.kl_beta * kl.value;
      params.theta -= config.learning_rate * (surrogate.gradient + config.kl_beta * kl.gradient);
    }

    StepMetrics m;
    m.step = step;
    double em = 0.0;
    for (const auto& t : trajectories) em += t.reward;
    m.mean_em = em / static_cast<double>(trajectories.size());
    m.mean_u = judged_rounds > 0 ? judged_u / judged_rounds : 0.0;
    m.mean_v = judged_rounds > 0 ? judged_v / judged_rounds : 0.0;
    double abs_adv = 0.0;
    for (const auto& tr : batch.triples) abs_adv += std::abs(tr.advantage);
    m.mean_abs_advantage = batch.triples.empty() ? 0.0 : abs_adv / static_cast<double>(batch.triples.size());
    m.kl = kl_penalty(params.theta, old, batch.states).value;
    m.loss = first_loss;
    if (result.metrics.empty()) {
      m.ema_em = m.mean_em;
      m.ema_u = m.mean_u;
      m.ema_v = m.mean_v;
    } else {
      const auto& prev = result.metrics.back();
      m.ema_em = lambda * m.mean_em + (1.0 - lambda) * prev.ema_em;
      m.ema_u = lambda * m.mean_u + (1.0 - lambda) * prev.ema_u;
      m.ema_v = lambda * m.mean_v + (1.0 - lambda) * prev.ema_v;
    }
    result.metrics.push_back(m);

    if (observer) observer(StepRecord{step, trajectories, credits, &params, &result.metrics.back()});
  }
  return result;
}

double evaluate(const PolicyParams& params, const SearchEnv& env, std::span<const QuestionId> question_ids, int repeats,
                std::uint64_t seed) {
  if (repeats < 1) throw std::invalid_argument("repeats must be at least 1");
  if (question_ids.empty()) throw std::invalid_argument("no questions to evaluate");
  double total = 0.0;
  for (QuestionId q : question_ids) {
    double hits = 0.0;
    for (int rep = 0; rep < repeats; ++rep) {
      Rng rng(derive_seed({seed, static_cast<std::uint64_t>(q), static_cast<std::uint64_t>(rep), 0x6576616cULL}));
      Episode episode(env, q);
      while (!episode.done()) episode.act(sample_action(params, episode.state(), env.world(), rng));
      hits += episode.trajectory().reward;
    }
    total += hits / repeats;
  }
  return total / static_cast<double>(question_ids.size());
}

}  // namespace cwgrpo

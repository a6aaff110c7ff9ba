#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cwgrpo/advantage.hpp"
#include "cwgrpo/policy.hpp"
#include "cwgrpo/search_env.hpp"

namespace cwgrpo {

struct TrainConfig {
  int group_size = 4;
  int batch_size = 32;  // questions per step
  int steps = 200;
  double learning_rate = 10.0;       // plain gradient descent on the toy policy
  double reference_learning_rate = 1e-6;  // the 8B-backbone value, recorded only
  double clip_epsilon = 0.2;
  double kl_beta = 0.001;
  Sharpness alpha = Sharpness::infinite();
  AblationMode mode = AblationMode::Full;
  std::uint64_t seed = 0;
  int epochs = 1;            // gradient steps per rollout batch
  double ema_decay = 0.1;    // lambda in EMA(n) = lambda x_n + (1 - lambda) EMA(n - 1)
  bool judge_failed = false; // also judge R = 0 trajectories (metrics only)
  EnvConfig env;

  void validate() const;
};

struct StepMetrics {
  int step = 0;
  double mean_em = 0.0;
  double mean_u = 0.0;  // over judged search rounds
  double mean_v = 0.0;
  double mean_abs_advantage = 0.0;
  double kl = 0.0;    // KL(pi_new || pi_old) on the batch states after the update
  double loss = 0.0;  // surrogate + beta * KL at the first gradient step
  double ema_em = 0.0;
  double ema_u = 0.0;
  double ema_v = 0.0;

  friend bool operator==(const StepMetrics&, const StepMetrics&) = default;
};

/// A trajectory together with what the sampling policy saw at each round.
struct SampledTrajectory {
  Trajectory trajectory;
  std::vector<ActionSet> action_sets;
  std::vector<Eigen::Index> chosen;
};

/// G episodes on one question from a frozen policy. Member m draws from the
/// stream derive_seed({stream_seed, question_id, m}).
std::vector<SampledTrajectory> rollout_group(const PolicySnapshot& policy, const SearchEnv& env, QuestionId question_id,
                                             int group_size, std::uint64_t stream_seed, std::int64_t first_trajectory_id = 0);

/// Visited states with the (action, advantage) taken in each.
struct Batch {
  struct Triple {
    std::size_t state;
    Eigen::Index action;
    double advantage;
  };
  std::vector<ActionSet> states;
  std::vector<Triple> triples;
};

/// One triple per round of every trajectory in the group: the search rounds
/// carry A_rounds[t], the final round A_answer. Moves the action sets out.
void append_group(Batch& batch, std::vector<SampledTrajectory>& group, std::span<const CreditAssignment> credits);

struct LossAndGradient {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

/// -mean min(r A, clip(r, 1 - eps, 1 + eps) A) with r = pi_theta / pi_old,
/// with its exact gradient. The gradient of a triple vanishes when the clipped
/// term is strictly the smaller one.
LossAndGradient surrogate_loss(const Eigen::VectorXd& theta, const PolicySnapshot& old, const Batch& batch, double clip_epsilon);

/// Mean over states of the closed-form KL(pi_theta(.|s) || pi_old(.|s)).
LossAndGradient kl_penalty(const Eigen::VectorXd& theta, const PolicySnapshot& old, std::span<const ActionSet> states);

/// Importance ratios of every triple, in order.
Eigen::VectorXd importance_ratios(const Eigen::VectorXd& theta, const PolicySnapshot& old, const Batch& batch);

/// Everything produced by one optimization step, handed to observers.
struct StepRecord {
  int step = 0;
  std::span<const Trajectory> trajectories;
  std::span<const CreditAssignment> credits;  // aligned with trajectories
  const PolicyParams* params = nullptr;       // after the update
  const StepMetrics* metrics = nullptr;
};

using StepObserver = std::function<void(const StepRecord&)>;

struct TrainResult {
  PolicyParams params;
  std::vector<StepMetrics> metrics;
};

/// Question ids used at a step: a seeded shuffle of the question pool,
/// cycled when the pool is smaller than the batch.
std::vector<QuestionId> batch_questions(const World& world, int batch_size, std::uint64_t seed, int step);

TrainResult train(const World& world, const TrainConfig& config, const StepObserver& observer = {});
TrainResult train(const World& world, const TrainConfig& config, PolicyParams initial, const StepObserver& observer = {});

/// Mean over questions of the mean exact match across `repeats` sampled
/// rollouts (temperature 1).
double evaluate(const PolicyParams& params, const SearchEnv& env, std::span<const QuestionId> question_ids, int repeats,
                std::uint64_t seed);

std::vector<QuestionId> all_question_ids(const World& world);

}  // namespace cwgrpo

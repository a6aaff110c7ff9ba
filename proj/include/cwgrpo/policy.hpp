#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "cwgrpo/rng.hpp"
#include "cwgrpo/search_env.hpp"
#include "cwgrpo/softmax.hpp"

namespace cwgrpo {

/// Layout of the feature map.
///
/// State features (shared by both action templates):
///   [0, 9)   fact of hop h (1-based) is known, zero past the question's depth
///   9        every hop is known, i.e. the answer is determined
///   10..12   round bucket one-hot: t <= 3, 4 <= t <= 6, t >= 7
///   13       fraction of hops resolved along the chain from the seed
///
/// Each action template owns a block of weights: its action-specific features
/// followed by a copy of the state features, so theta holds one weight per
/// (feature, template) pair.
namespace features {
inline constexpr int kMaxHops = 9;
inline constexpr int kAnswerDetermined = 9;
inline constexpr int kRoundBucket = 10;
inline constexpr int kProgress = 13;
inline constexpr int kState = 14;

// Query template
inline constexpr int kQueryBias = 0;
inline constexpr int kQueryFrontier = 1;     // subject is the last entity reached on the chain
inline constexpr int kQueryNextRelation = 2; // relation is the next one the chain needs
inline constexpr int kQueryOnPath = 3;       // both of the above
inline constexpr int kQueryRepeated = 4;
inline constexpr int kQueryInQuestion = 5;   // relation appears somewhere in the question
inline constexpr int kQuerySeed = 6;
inline constexpr int kQuerySpecific = 7;
inline constexpr int kQueryBlock = kQuerySpecific + kState;

// Answer template
inline constexpr int kAnswerBias = 0;
inline constexpr int kAnswerIsDetermined = 1;
inline constexpr int kAnswerFrontier = 2;
inline constexpr int kAnswerSeed = 3;
inline constexpr int kAnswerSpecific = 4;
inline constexpr int kAnswerBlock = kAnswerSpecific + kState;

inline constexpr int kQueryOffset = 0;
inline constexpr int kAnswerOffset = kQueryBlock;
inline constexpr int kDim = kQueryBlock + kAnswerBlock;
}  // namespace features

struct PolicyParams {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(features::kDim);

  static PolicyParams zeros() { return {}; }
  bool finite() const { return theta.allFinite(); }

  friend bool operator==(const PolicyParams& a, const PolicyParams& b) { return a.theta == b.theta; }
};

/// Immutable, cheaply shareable copy of the parameters (pi_theta_old).
class PolicySnapshot {
 public:
  explicit PolicySnapshot(const PolicyParams& params) : params_(std::make_shared<const PolicyParams>(params)) {}
  const PolicyParams& params() const { return *params_; }
  const Eigen::VectorXd& theta() const { return params_->theta; }

 private:
  std::shared_ptr<const PolicyParams> params_;
};

inline PolicySnapshot snapshot(const PolicyParams& params) { return PolicySnapshot(params); }

/// Candidate actions of a state with their feature rows. Entries whose mask
/// is false are illegal and receive probability exactly 0.
struct ActionSet {
  std::vector<Action> actions;
  Eigen::MatrixXd features;  // actions.size() x kDim
  Mask legal;

  Eigen::Index size() const { return static_cast<Eigen::Index>(actions.size()); }
  /// Index of `a`, or -1 when it is not a candidate.
  Eigen::Index find(const Action& a) const;
};

struct ActionDistribution {
  Eigen::VectorXd logits;
  Eigen::VectorXd log_probs;
  Eigen::VectorXd probs;
};

Eigen::VectorXd featurize(const State& state, const World& world);

/// Legal actions: Query(e, r) for every mentioned entity e and relation r,
/// then Answer(name(e)) for every mentioned entity e.
ActionSet action_set(const State& state, const World& world);

ActionDistribution action_dist(const Eigen::VectorXd& theta, const ActionSet& set);
ActionDistribution action_dist(const PolicyParams& params, const State& state, const World& world);

/// Throws std::invalid_argument for illegal or unknown actions.
double log_prob(const Eigen::VectorXd& theta, const ActionSet& set, Eigen::Index action);
double log_prob(const PolicyParams& params, const State& state, const Action& action, const World& world);

/// d log pi(a|s) / d theta = phi(s, a) - E_pi[phi(s, .)].
Eigen::VectorXd grad_log_prob(const Eigen::VectorXd& theta, const ActionSet& set, Eigen::Index action);
Eigen::VectorXd grad_log_prob(const PolicyParams& params, const State& state, const Action& action, const World& world);

Eigen::Index sample_index(const ActionDistribution& dist, Rng& rng);
Action sample_action(const PolicyParams& params, const State& state, const World& world, Rng& rng);

/// Checkpoint: JSON {"shape": [dim], "theta": [...]}; doubles round-trip exactly.
std::string serialize_params(const PolicyParams& params);
PolicyParams parse_params(const std::string& text);
void save_params(const PolicyParams& params, const std::string& path);
PolicyParams load_params(const std::string& path);

}  // namespace cwgrpo

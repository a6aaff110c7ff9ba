#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cwgrpo/round_signals.hpp"
#include "cwgrpo/search_env.hpp"
#include "cwgrpo/softmax.hpp"

namespace cwgrpo {

/// Which round signal feeds the contribution gate.
enum class AblationMode {
  Full,              // p = u * v
  WithoutRetrieval,  // p = v
  WithoutReasoning,  // p = u
};

std::string_view to_string(AblationMode mode);
AblationMode ablation_from_string(std::string_view s);

/// Credit sharpness alpha: a non-negative real or the distinguished value
/// infinity (all credit on the rounds with maximal gate value).
class Sharpness {
 public:
  static Sharpness finite(double alpha) {
    if (!(alpha >= 0.0) || std::isinf(alpha)) throw std::invalid_argument("alpha must be a finite non-negative real or INF");
    return Sharpness(alpha, false);
  }
  static Sharpness infinite() { return Sharpness(0.0, true); }

  bool is_infinite() const { return infinite_; }
  double value() const { return infinite_ ? std::numeric_limits<double>::infinity() : value_; }

  /// "inf" or the shortest round-trip decimal.
  std::string to_string() const;
  /// Accepts "inf", "INF", "infinity" or a non-negative real.
  static Sharpness parse(std::string_view s);

  friend bool operator==(const Sharpness&, const Sharpness&) = default;

 private:
  Sharpness(double v, bool inf) : value_(v), infinite_(inf) {}
  double value_;
  bool infinite_;
};

/// Group-normalized outcome advantage, (R_i - mean) / std with the population
/// standard deviation. A group whose std is below 1e-8 carries no relative
/// signal and gets all-zero advantages.
template <typename Derived>
VectorX<typename Derived::Scalar> outcome_advantages(const Eigen::MatrixBase<Derived>& rewards) {
  using Scalar = typename Derived::Scalar;
  const auto n = rewards.size();
  if (n < 2) throw std::invalid_argument("group size must be at least 2");
  if (!rewards.allFinite()) throw std::invalid_argument("rewards must be finite");
  const Scalar mean = rewards.mean();
  const VectorX<Scalar> centered = rewards.array() - mean;
  const Scalar std_dev = std::sqrt(centered.squaredNorm() / static_cast<Scalar>(n));
  if (std_dev < Scalar(1e-8)) return VectorX<Scalar>::Zero(n);
  return centered / std_dev;
}

/// Gate values p^t selected by the ablation mode.
Eigen::VectorXd gate_values(std::span<const RoundSignals> signals, AblationMode mode);

/// Normalized per-round contribution c^t over the T - 1 search rounds.
///
/// Success (reward exactly 1): softmax(alpha * p). Computed as
/// c_j = 1 / sum_t exp(alpha (p_t - p_j)) so that alpha = 0 yields exactly
/// 1 / (T - 1) and each c_j is monotone in alpha. For alpha = INF the credit is
/// uniform over the rounds with maximal p (all rounds if p is constant).
/// Failure: uniform 1 / (T - 1) regardless of the gate values.
template <typename Derived>
VectorX<typename Derived::Scalar> contribution_weights(typename Derived::Scalar reward,
                                                       const Eigen::MatrixBase<Derived>& gate,
                                                       Sharpness alpha) {
  using Scalar = typename Derived::Scalar;
  const auto n = gate.size();
  if (n < 1) throw std::invalid_argument("contribution weights need T >= 2");
  if (reward != Scalar(1)) return VectorX<Scalar>::Constant(n, Scalar(1) / static_cast<Scalar>(n));

  VectorX<Scalar> c(n);
  if (alpha.is_infinite()) {
    const Scalar top = gate.maxCoeff();
    const auto winners = (gate.array() == top).count();
    for (Eigen::Index j = 0; j < n; ++j) c(j) = gate(j) == top ? Scalar(1) / static_cast<Scalar>(winners) : Scalar(0);
    return c;
  }
  const Scalar a = static_cast<Scalar>(alpha.value());
  for (Eigen::Index j = 0; j < n; ++j) {
    Scalar denom = 0;
    for (Eigen::Index t = 0; t < n; ++t) denom += std::exp(a * (gate(t) - gate(j)));
    c(j) = Scalar(1) / denom;
  }
  return c;
}

Eigen::VectorXd contribution_weights(double reward, std::span<const RoundSignals> signals, Sharpness alpha, AblationMode mode);

template <typename Scalar>
struct AdvantageProfile {
  Scalar outcome = 0;     // A^O
  VectorX<Scalar> rounds; // A^t for the T - 1 search rounds
  Scalar answer = 0;      // A^T, always equal to A^O
};

/// A^t = A^O * c^t * (T - 1) for t < T and A^T = A^O. The mean of the search
/// round advantages equals A^O.
template <typename Derived>
AdvantageProfile<typename Derived::Scalar> reallocate(typename Derived::Scalar outcome,
                                                      const Eigen::MatrixBase<Derived>& weights, int T) {
  using Scalar = typename Derived::Scalar;
  if (T < 1 || weights.size() != T - 1) throw std::invalid_argument("weights must have length T - 1");
  AdvantageProfile<Scalar> p;
  p.outcome = outcome;
  p.answer = outcome;
  p.rounds.resize(weights.size());
  const Scalar search_rounds = static_cast<Scalar>(T - 1);
  for (Eigen::Index t = 0; t < weights.size(); ++t) p.rounds(t) = outcome * (weights(t) * search_rounds);
  return p;
}

/// Contribution weights and the resulting profile of one trajectory.
struct CreditAssignment {
  Eigen::VectorXd weights;  // empty when T = 1
  AdvantageProfile<double> profile;
};

/// Outcome advantages over the group, then per trajectory contribution weights
/// and reallocation. Successful trajectories with T >= 2 must carry judged
/// signals; failed ones are never consulted.
std::vector<CreditAssignment> group_advantage_profiles(std::span<const Trajectory> group, Sharpness alpha, AblationMode mode);

/// Search rounds in successful trajectories that received zero contribution.
struct GateCount {
  std::size_t zero = 0;
  std::size_t total = 0;

  GateCount& operator+=(const GateCount& o) {
    zero += o.zero;
    total += o.total;
    return *this;
  }
  /// Throws std::domain_error when there are no rounds.
  double fraction() const;
};

GateCount count_zero_contribution(std::span<const Eigen::VectorXd> success_weights);

/// Fraction of zero weights among all search rounds of the given (successful)
/// trajectories' weights. Throws std::domain_error on a zero denominator.
double zero_contribution_fraction(std::span<const Eigen::VectorXd> success_weights);

}  // namespace cwgrpo

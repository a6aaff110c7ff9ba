#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cwgrpo/kb_synth.hpp"
#include "cwgrpo/round_signals.hpp"
#include "cwgrpo/search_env.hpp"

namespace cwgrpo {

/// Ground-truth judge for search round t (1-based, t < T).
///
/// u = 1 iff the round retrieved a gold-evidence document of the question whose
/// fact was not yet known before the round. v = 1 iff the query's subject is
/// reachable (the seed, or the object of a known fact), lies on the hop chain,
/// and the relation is the chain's next relation from that entity.
RoundSignals judge_round(const Trajectory& trajectory, int t, const World& world);

/// Signals for every search round; empty when T = 1.
std::vector<RoundSignals> judge_trajectory(const Trajectory& trajectory, const World& world);

enum class Confidence { High = 0, Medium = 1, Low = 2 };

std::string_view to_string(Confidence c);
Confidence confidence_from_string(std::string_view s);

struct GoldAnnotation {
  std::int64_t trajectory_id = 0;
  int t = 1;
  int u_gold = 0;
  int v_gold = 0;
  Confidence confidence = Confidence::High;
};

struct AgreementCount {
  std::size_t agreed = 0;
  std::size_t total = 0;

  double rate() const { return total == 0 ? 0.0 : static_cast<double>(agreed) / static_cast<double>(total); }
};

struct AgreementReport {
  AgreementCount overall;
  std::array<AgreementCount, 3> by_confidence;  // indexed by Confidence

  const AgreementCount& at(Confidence c) const { return by_confidence[static_cast<int>(c)]; }
};

/// A round agrees iff both u and v match the gold label. Throws
/// std::invalid_argument on length mismatch.
AgreementReport agreement_rate(std::span<const RoundSignals> judged, std::span<const GoldAnnotation> gold);

}  // namespace cwgrpo

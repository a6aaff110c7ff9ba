#include "cwgrpo/advantage.hpp"

#include <charconv>
#include <cctype>

namespace cwgrpo {

std::string_view to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::Full: return "full";
    case AblationMode::WithoutRetrieval: return "wo_retrieval";
    case AblationMode::WithoutReasoning: return "wo_reasoning";
  }
  return "full";
}

AblationMode ablation_from_string(std::string_view s) {
  if (s == "full" || s == "FULL") return AblationMode::Full;
  if (s == "wo_retrieval" || s == "WO_RETRIEVAL") return AblationMode::WithoutRetrieval;
  if (s == "wo_reasoning" || s == "WO_REASONING") return AblationMode::WithoutReasoning;
  throw std::invalid_argument("unknown ablation mode '" + std::string(s) + "'");
}

std::string Sharpness::to_string() const {
  if (infinite_) return "inf";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value_);
  return std::string(buf, end);
}

Sharpness Sharpness::parse(std::string_view s) {
  std::string lower(s);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "inf" || lower == "infinity") return infinite();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("cannot parse alpha '" + std::string(s) + "'");
  return finite(v);
}

Eigen::VectorXd gate_values(std::span<const RoundSignals> signals, AblationMode mode) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(signals.size()));
  for (std::size_t t = 0; t < signals.size(); ++t) {
    const auto& s = signals[t];
    int g = s.p;
    if (mode == AblationMode::WithoutRetrieval) g = s.v;
    if (mode == AblationMode::WithoutReasoning) g = s.u;
    p(static_cast<Eigen::Index>(t)) = g;
  }
  return p;
}

Eigen::VectorXd contribution_weights(double reward, std::span<const RoundSignals> signals, Sharpness alpha, AblationMode mode) {
  return contribution_weights(reward, gate_values(signals, mode), alpha);
}

std::vector<CreditAssignment> group_advantage_profiles(std::span<const Trajectory> group, Sharpness alpha, AblationMode mode) {
  Eigen::VectorXd rewards(static_cast<Eigen::Index>(group.size()));
  for (std::size_t i = 0; i < group.size(); ++i) rewards(static_cast<Eigen::Index>(i)) = group[i].reward;
  const Eigen::VectorXd outcome = outcome_advantages(rewards);

  std::vector<CreditAssignment> out;
  out.reserve(group.size());
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto& traj = group[i];
    const double a = outcome(static_cast<Eigen::Index>(i));
    const int T = traj.length();
    CreditAssignment credit;
    if (T >= 2) {
      if (traj.reward == 1.0) {
        if (static_cast<int>(traj.signals.size()) != T - 1)
          throw std::invalid_argument("successful trajectory has not been judged");
        credit.weights = contribution_weights(traj.reward, gate_values(traj.signals, mode), alpha);
      } else {
        credit.weights = Eigen::VectorXd::Constant(T - 1, 1.0 / (T - 1));
      }
    }
    credit.profile = reallocate(a, credit.weights, T);
    out.push_back(std::move(credit));
  }
  return out;
}

double GateCount::fraction() const {
  if (total == 0) throw std::domain_error("no search rounds in successful trajectories");
  return static_cast<double>(zero) / static_cast<double>(total);
}

GateCount count_zero_contribution(std::span<const Eigen::VectorXd> success_weights) {
  GateCount g;
  for (const auto& w : success_weights) {
    g.total += static_cast<std::size_t>(w.size());
    g.zero += static_cast<std::size_t>((w.array() == 0.0).count());
  }
  return g;
}

double zero_contribution_fraction(std::span<const Eigen::VectorXd> success_weights) {
  return count_zero_contribution(success_weights).fraction();
}

}  // namespace cwgrpo

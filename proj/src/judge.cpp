#include "cwgrpo/judge.hpp"

#include <algorithm>
#include <stdexcept>

namespace cwgrpo {

RoundSignals judge_round(const Trajectory& trajectory, int t, const World& world) {
  const int T = trajectory.length();
  if (t < 1 || t >= T) throw std::out_of_range("only search rounds 1 <= t < T are judged");

  const auto& round = trajectory.rounds[static_cast<std::size_t>(t - 1)];
  const auto* query = std::get_if<QueryAction>(&round.action);
  if (query == nullptr) throw std::invalid_argument("search round does not carry a query");

  const auto& q = world.question(trajectory.question_id);
  const auto& before = round.state;

  int u = 0;
  for (DocId d : round.retrieved) {
    const auto& carries = world.documents.at(d).carries;
    if (!carries) continue;
    const bool on_chain = std::find(q.hop_chain.begin(), q.hop_chain.end(), *carries) != q.hop_chain.end();
    if (on_chain && !before.knows(*carries)) {
      u = 1;
      break;
    }
  }

  const bool reachable = query->entity == q.seed_entity ||
                         std::any_of(before.known_facts.begin(), before.known_facts.end(),
                                     [&](FactId f) { return world.facts[f].object == query->entity; });
  int v = 0;
  if (reachable) {
    for (int h = 0; h < q.hops(); ++h) {
      if (world.chain_entity(q, h) == query->entity) {
        v = world.facts[q.hop_chain[h]].relation == query->relation ? 1 : 0;
        break;
      }
    }
  }
  return RoundSignals::make(u, v);
}

std::vector<RoundSignals> judge_trajectory(const Trajectory& trajectory, const World& world) {
  std::vector<RoundSignals> out;
  for (int t = 1; t < trajectory.length(); ++t) out.push_back(judge_round(trajectory, t, world));
  return out;
}

std::string_view to_string(Confidence c) {
  switch (c) {
    case Confidence::High: return "high";
    case Confidence::Medium: return "medium";
    case Confidence::Low: return "low";
  }
  return "high";
}

Confidence confidence_from_string(std::string_view s) {
  if (s == "high") return Confidence::High;
  if (s == "medium") return Confidence::Medium;
  if (s == "low") return Confidence::Low;
  throw std::invalid_argument("confidence must be high, medium or low");
}

AgreementReport agreement_rate(std::span<const RoundSignals> judged, std::span<const GoldAnnotation> gold) {
  if (judged.size() != gold.size()) throw std::invalid_argument("judged and gold lists differ in length");
  AgreementReport report;
  for (std::size_t i = 0; i < judged.size(); ++i) {
    const bool agree = judged[i].u == gold[i].u_gold && judged[i].v == gold[i].v_gold;
    auto& bucket = report.by_confidence[static_cast<int>(gold[i].confidence)];
    ++bucket.total;
    ++report.overall.total;
    if (agree) {
      ++bucket.agreed;
      ++report.overall.agreed;
    }
  }
  return report;
}

}  // namespace cwgrpo

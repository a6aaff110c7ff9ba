#pragma once

namespace cwgrpo {

/// Binary round-level signals for one search round. p is the conjunctive
/// gate u * v.
struct RoundSignals {
  int u = 0;
  int v = 0;
  int p = 0;

  static constexpr RoundSignals make(int u, int v) { return {u, v, u * v}; }

  friend bool operator==(const RoundSignals&, const RoundSignals&) = default;
};

}  // namespace cwgrpo

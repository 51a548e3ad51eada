#pragma once

#include <span>
#include <string>
#include <vector>

#include "darsim/errors.hpp"
#include "darsim/rng.hpp"
#include "darsim/state.hpp"

namespace darsim {

enum class PolicyKind {
  kFirstFit,         // first feasible candidate in draw order
  kBalanced,         // feasible candidate minimising the larger leg load
  kUniformFeasible,  // uniform over the feasible candidates
};

inline const char* policy_name(PolicyKind p) {
  switch (p) {
    case PolicyKind::kFirstFit:
      return "fdar";
    case PolicyKind::kBalanced:
      return "bdar";
    case PolicyKind::kUniformFeasible:
      return "uniform";
  }
  return "?";
}

inline PolicyKind parse_policy(const std::string& s) {
  if (s == "fdar") return PolicyKind::kFirstFit;
  if (s == "bdar") return PolicyKind::kBalanced;
  if (s == "uniform") return PolicyKind::kUniformFeasible;
  throw ValidationError("unknown policy '" + s +
                        "' (expected fdar, bdar or uniform)");
}

// d intermediate nodes drawn uniformly with replacement from V \ {u, v},
// kept in draw order; repeats permitted.
struct CandidateSet {
  std::vector<int> nodes;
};

// Consumes exactly d draws from the stream, so replays are stable.
inline CandidateSet sample_candidates(Xoshiro256& rng, int n, int u, int v,
                                      int d) {
  const int a = u < v ? u : v;
  const int b = u < v ? v : u;
  CandidateSet cs;
  cs.nodes.reserve(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    int w = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 2)));
    if (w >= a) ++w;
    if (w >= b) ++w;
    cs.nodes.push_back(w);
  }
  return cs;
}

// Indices of candidates whose route has spare capacity on both legs.
// Empty means the call is blocked under every selection rule.
inline std::vector<int> acceptance_set(const NetworkState& state, int u, int v,
                                       std::span<const int> candidates) {
  std::vector<int> feasible;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (state.route_feasible(u, v, candidates[i]))
      feasible.push_back(static_cast<int>(i));
  }
  return feasible;
}

// First feasible candidate in draw order, or kNoChoice.
inline int fdar_select(const NetworkState& state, int u, int v,
                       std::span<const int> candidates) {
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (state.route_feasible(u, v, candidates[i])) return static_cast<int>(i);
  }
  return kNoChoice;
}

// Feasible candidate minimising max(load(u->w), load(v->w)); ties broken by
// lowest index. kNoChoice when no candidate is feasible.
inline int bdar_select(const NetworkState& state, int u, int v,
                       std::span<const int> candidates) {
  int best = kNoChoice;
  int best_load = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const int w = candidates[i];
    if (!state.route_feasible(u, v, w)) continue;
    const int larger = std::max(state.load(u, w), state.load(v, w));
    if (best == kNoChoice || larger < best_load) {
      best = static_cast<int>(i);
      best_load = larger;
    }
  }
  return best;
}

// Uniform over the acceptance set. Consumes one draw from the stream iff the
// set has at least two elements.
inline int uniform_feasible_select(Xoshiro256& rng, const NetworkState& state,
                                   int u, int v,
                                   std::span<const int> candidates) {
  const std::vector<int> feasible = acceptance_set(state, u, v, candidates);
  if (feasible.empty()) return kNoChoice;
  if (feasible.size() == 1) return feasible.front();
  return feasible[rng.below(feasible.size())];
}

inline int select_route(PolicyKind policy, Xoshiro256& rng,
                        const NetworkState& state, int u, int v,
                        std::span<const int> candidates) {
  switch (policy) {
    case PolicyKind::kFirstFit:
      return fdar_select(state, u, v, candidates);
    case PolicyKind::kBalanced:
      return bdar_select(state, u, v, candidates);
    case PolicyKind::kUniformFeasible:
      return uniform_feasible_select(rng, state, u, v, candidates);
  }
  return kNoChoice;
}

}  // namespace darsim

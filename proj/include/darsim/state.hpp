#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "darsim/errors.hpp"

namespace darsim {

inline constexpr int kNoChoice = -1;

// Per-link capacity: a positive integer or infinite.
class Capacity {
 public:
  Capacity() : value_(1) {}

  static Capacity finite(int d) {
    if (d < 1) throw ConfigError("capacity must be >= 1");
    Capacity c;
    c.value_ = d;
    return c;
  }

  static Capacity infinite() {
    Capacity c;
    c.value_ = kInfinite;
    return c;
  }

  bool is_infinite() const { return value_ == kInfinite; }

  // Finite value; only meaningful when !is_infinite().
  int value() const { return value_; }

  // True when a link at this load cannot accept another call.
  bool full(int load) const { return !is_infinite() && load >= value_; }

  // True when a link at this load is saturated (load == D).
  bool saturates(int load) const { return !is_infinite() && load >= value_; }

  bool operator==(const Capacity& o) const { return value_ == o.value_; }

  std::string str() const {
    return is_infinite() ? "infinite" : std::to_string(value_);
  }

 private:
  static constexpr int kInfinite = std::numeric_limits<int>::max();
  int value_;
};

// Directed link: the resource used at `endpoint` when a call with that
// endpoint is routed via `via`.
struct LinkId {
  int endpoint = 0;
  int via = 0;

  bool operator==(const LinkId&) const = default;
};

// One call: endpoints, candidate intermediates in draw order, the chosen
// candidate index (kNoChoice when blocked) and its arrival/departure times.
struct CallRecord {
  std::uint64_t id = 0;
  int u = 0;
  int v = 0;
  std::vector<int> candidates;
  int chosen = kNoChoice;
  double arrival = 0.0;
  double departure = 0.0;

  int via() const { return candidates.at(static_cast<std::size_t>(chosen)); }
};

// Instantaneous observables derived from the load matrix and call table.
struct Observables {
  std::vector<std::int64_t> node_load;  // calls with one end v
  std::vector<int> sat_at;              // saturated links v->w
  std::vector<int> sat_via;             // saturated links u->w, per via node w
  std::uint64_t total_calls = 0;
  int max_sat = 0;

  double mean_sat_at() const {
    if (sat_at.empty()) return 0.0;
    double s = 0;
    for (int x : sat_at) s += x;
    return s / static_cast<double>(sat_at.size());
  }

  double mean_sat_via() const {
    if (sat_via.empty()) return 0.0;
    double s = 0;
    for (int x : sat_via) s += x;
    return s / static_cast<double>(sat_via.size());
  }
};

// Read-only view of a load matrix, for analytic operations that act on a
// saturation pattern rather than a full state (tests build these directly).
struct LoadMatrixView {
  int n = 0;
  Capacity capacity;
  std::span<const int> loads;  // row-major n*n, diagonal unused

  int at(int endpoint, int via) const {
    return loads[static_cast<std::size_t>(endpoint) *
                     static_cast<std::size_t>(n) +
                 static_cast<std::size_t>(via)];
  }
};

// The network state: per-directed-link loads plus the active-call table.
// Saturation counters and load sums are maintained incrementally; a brute
// force recompute is available for audits.
class NetworkState {
 public:
  NetworkState() = default;

  NetworkState(int n, Capacity capacity)
      : n_(n),
        capacity_(capacity),
        loads_(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0),
        node_load_(static_cast<std::size_t>(n), 0),
        sat_at_(static_cast<std::size_t>(n), 0),
        sat_via_(static_cast<std::size_t>(n), 0),
        links_at_load_(1, static_cast<std::int64_t>(n) *
                              static_cast<std::int64_t>(n - 1)) {
    if (n < 4) throw ConfigError("node count must be >= 4");
  }

  int n() const { return n_; }
  Capacity capacity() const { return capacity_; }
  double clock() const { return clock_; }
  void set_clock(double t) { clock_ = t; }

  int load(int endpoint, int via) const { return loads_[index(endpoint, via)]; }
  std::int64_t load_sum() const { return load_sum_; }
  std::uint64_t total_calls() const { return calls_.size(); }
  std::int64_t node_load(int v) const {
    return node_load_[static_cast<std::size_t>(v)];
  }
  int sat_at(int v) const { return sat_at_[static_cast<std::size_t>(v)]; }
  int sat_via(int w) const { return sat_via_[static_cast<std::size_t>(w)]; }
  int max_load_seen() const { return max_load_seen_; }

  // Count of directed links currently at each load value, index = load.
  const std::vector<std::int64_t>& links_at_load() const {
    return links_at_load_;
  }

  LoadMatrixView view() const { return LoadMatrixView{n_, capacity_, loads_}; }

  bool has_call(std::uint64_t id) const { return calls_.contains(id); }

  const CallRecord& call(std::uint64_t id) const {
    auto it = calls_.find(id);
    if (it == calls_.end())
      throw UnknownCall("no active call with id " + std::to_string(id));
    return it->second;
  }

  const std::unordered_map<std::uint64_t, CallRecord>& calls() const {
    return calls_;
  }

  // Both legs of the route via w have spare capacity.
  bool route_feasible(int u, int v, int w) const {
    return !capacity_.full(load(u, w)) && !capacity_.full(load(v, w));
  }

  // Occupy the chosen route of an accepted call and activate the call.
  void apply_arrival(const CallRecord& call) {
    validate_call(call);
    if (call.chosen == kNoChoice)
      throw BadCall("apply_arrival requires a chosen route");
    const int w = call.via();
    if (!route_feasible(call.u, call.v, w))
      throw CapacityViolation("route " + std::to_string(call.u) + "-" +
                              std::to_string(call.v) + " via " +
                              std::to_string(w) + " is not feasible");
    if (calls_.contains(call.id))
      throw BadCall("duplicate call id " + std::to_string(call.id));
    bump(call.u, w, +1);
    bump(call.v, w, +1);
    calls_.emplace(call.id, call);
  }

  // Free both route links and deactivate the call.
  void apply_departure(std::uint64_t id) {
    auto it = calls_.find(id);
    if (it == calls_.end())
      throw UnknownCall("no active call with id " + std::to_string(id));
    const CallRecord& call = it->second;
    const int w = call.via();
    bump(call.u, w, -1);
    bump(call.v, w, -1);
    calls_.erase(it);
  }

  // Superprocess occupation: the call holds every distinct candidate route
  // for its whole duration (a duplicate candidate counts once).
  void apply_arrival_all_routes(const CallRecord& call) {
    validate_call(call);
    if (calls_.contains(call.id))
      throw BadCall("duplicate call id " + std::to_string(call.id));
    for (int w : distinct_routes(call)) {
      bump(call.u, w, +1);
      bump(call.v, w, +1);
    }
    calls_.emplace(call.id, call);
  }

  void apply_departure_all_routes(std::uint64_t id) {
    auto it = calls_.find(id);
    if (it == calls_.end())
      throw UnknownCall("no active call with id " + std::to_string(id));
    const CallRecord& call = it->second;
    for (int w : distinct_routes(call)) {
      bump(call.u, w, -1);
      bump(call.v, w, -1);
    }
    calls_.erase(it);
  }

  static std::vector<int> distinct_routes(const CallRecord& call) {
    std::vector<int> vias(call.candidates);
    std::sort(vias.begin(), vias.end());
    vias.erase(std::unique(vias.begin(), vias.end()), vias.end());
    return vias;
  }

  // Observables from the incremental counters. O(n) for the max scan.
  Observables observables() const {
    Observables obs;
    obs.node_load = node_load_;
    obs.sat_at = sat_at_;
    obs.sat_via = sat_via_;
    obs.total_calls = calls_.size();
    obs.max_sat = sat_at_.empty()
                      ? 0
                      : *std::max_element(sat_at_.begin(), sat_at_.end());
    return obs;
  }

  // Brute-force recompute of every counter from the raw load matrix,
  // for audits against the incremental values.
  Observables recompute_observables() const {
    Observables obs;
    obs.node_load.assign(static_cast<std::size_t>(n_), 0);
    obs.sat_at.assign(static_cast<std::size_t>(n_), 0);
    obs.sat_via.assign(static_cast<std::size_t>(n_), 0);
    obs.total_calls = calls_.size();
    for (int v = 0; v < n_; ++v) {
      for (int w = 0; w < n_; ++w) {
        if (v == w) continue;
        const int l = load(v, w);
        obs.node_load[static_cast<std::size_t>(v)] += l;
        if (capacity_.saturates(l)) {
          ++obs.sat_at[static_cast<std::size_t>(v)];
          ++obs.sat_via[static_cast<std::size_t>(w)];
        }
      }
    }
    obs.max_sat = *std::max_element(obs.sat_at.begin(), obs.sat_at.end());
    return obs;
  }

 private:
  std::size_t index(int endpoint, int via) const {
    return static_cast<std::size_t>(endpoint) * static_cast<std::size_t>(n_) +
           static_cast<std::size_t>(via);
  }

  void validate_call(const CallRecord& call) const {
    if (call.u == call.v || call.u < 0 || call.v < 0 || call.u >= n_ ||
        call.v >= n_)
      throw BadCall("call endpoints must be distinct nodes in [0, n)");
    if (call.candidates.empty()) throw BadCall("call has no candidates");
    for (int w : call.candidates) {
      if (w == call.u || w == call.v)
        throw BadCall("candidate " + std::to_string(w) +
                      " equals a call endpoint");
      if (w < 0 || w >= n_) throw BadCall("candidate out of range");
    }
    if (call.chosen != kNoChoice &&
        (call.chosen < 0 ||
         static_cast<std::size_t>(call.chosen) >= call.candidates.size()))
      throw BadCall("chosen index out of range");
  }

  void bump(int endpoint, int via, int delta) {
    int& l = loads_[index(endpoint, via)];
    const bool was_sat = capacity_.saturates(l);
    links_at_load_[static_cast<std::size_t>(l)] -= 1;
    l += delta;
    if (static_cast<std::size_t>(l) >= links_at_load_.size())
      links_at_load_.resize(static_cast<std::size_t>(l) + 1, 0);
    links_at_load_[static_cast<std::size_t>(l)] += 1;
    const bool is_sat = capacity_.saturates(l);
    node_load_[static_cast<std::size_t>(endpoint)] += delta;
    load_sum_ += delta;
    if (is_sat != was_sat) {
      const int d = is_sat ? 1 : -1;
      sat_at_[static_cast<std::size_t>(endpoint)] += d;
      sat_via_[static_cast<std::size_t>(via)] += d;
    }
    max_load_seen_ = std::max(max_load_seen_, l);
  }

  int n_ = 0;
  Capacity capacity_;
  std::vector<int> loads_;
  std::unordered_map<std::uint64_t, CallRecord> calls_;
  double clock_ = 0.0;

  std::vector<std::int64_t> node_load_;
  std::vector<int> sat_at_;
  std::vector<int> sat_via_;
  std::vector<std::int64_t> links_at_load_;
  std::int64_t load_sum_ = 0;
  int max_load_seen_ = 0;
};

// Build a state with an optional list of initial calls applied and clock 0.
inline NetworkState new_state(int n, Capacity capacity,
                              const std::vector<CallRecord>& initial = {}) {
  NetworkState state(n, capacity);
  for (const CallRecord& call : initial) state.apply_arrival(call);
  return state;
}

}  // namespace darsim

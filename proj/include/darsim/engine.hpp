#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <ostream>
#include <queue>
#include <utility>
#include <vector>

#include "darsim/errors.hpp"
#include "darsim/metrics.hpp"
#include "darsim/policy.hpp"
#include "darsim/rng.hpp"
#include "darsim/state.hpp"

namespace darsim {

enum class SimMode { kCapacitated, kSuperprocess, kCoupled };

inline const char* mode_name(SimMode m) {
  switch (m) {
    case SimMode::kCapacitated:
      return "capacitated";
    case SimMode::kSuperprocess:
      return "superprocess";
    case SimMode::kCoupled:
      return "coupled";
  }
  return "?";
}

inline SimMode parse_mode(const std::string& s) {
  if (s == "capacitated") return SimMode::kCapacitated;
  if (s == "superprocess") return SimMode::kSuperprocess;
  if (s == "coupled") return SimMode::kCoupled;
  throw ValidationError("unknown mode '" + s + "'");
}

// Full description of one simulation run.
struct SimConfig {
  int n = 0;
  double lambda = 0.0;
  int d = 1;
  Capacity capacity;
  PolicyKind policy = PolicyKind::kFirstFit;
  double horizon = 0.0;
  double warmup = 0.0;
  std::uint64_t seed = 0;
  double snapshot_every = 0.0;  // 0 = snapshots off
  std::vector<CallRecord> initial_calls;
  SimMode mode = SimMode::kCapacitated;
  std::uint64_t max_events = 0;  // 0 = run to horizon

  // Auxiliary run controls, not part of the experiment identity.
  bool audit = false;
  int replication_tag = 0;
  bool keep_final_state = false;
  std::ostream* trace = nullptr;
  std::function<void(const NetworkState&, std::uint64_t)> on_event;

  void validate() const {
    if (n < 4) throw ConfigError("n must be >= 4");
    if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
    if (d < 1) throw ConfigError("d must be >= 1");
    if (horizon < 0.0) throw ConfigError("horizon must be >= 0");
    if (warmup < 0.0) throw ConfigError("warmup must be >= 0");
    if (warmup > horizon || (warmup == horizon && horizon > 0.0))
      throw ConfigError("warmup must be < horizon");
    if (snapshot_every < 0.0) throw ConfigError("snapshot_every must be >= 0");
    if (mode == SimMode::kCoupled && !initial_calls.empty())
      throw ConfigError("coupled mode requires an empty initial state");
    for (const CallRecord& c : initial_calls) {
      if (!(c.departure > 0.0))
        throw ConfigError("initial calls must have departure > 0");
      if (c.chosen == kNoChoice)
        throw ConfigError("initial calls must carry a chosen route");
    }
  }
};

struct StateSummary {
  double clock = 0.0;
  std::uint64_t total_calls = 0;
  int max_sat = 0;
  int max_load_seen = 0;
  std::int64_t load_sum = 0;
};

struct RunResult {
  MetricsReport metrics;
  StateSummary final_state;
  std::uint64_t event_count = 0;
  double wall_seconds = 0.0;
  std::shared_ptr<const NetworkState> final_full;  // set by keep_final_state
};

struct CoupledResult {
  std::uint64_t violations = 0;
  std::uint64_t event_count = 0;
  RunResult capacitated;
  RunResult superprocess;
};

namespace detail {

// Time-weighted accumulators for one process over the window [warmup, end].
class Accumulator {
 public:
  void init(const SimConfig& cfg, PolicyKind policy) {
    report_.key_set = true;
    report_.n = cfg.n;
    report_.capacity = cfg.capacity;
    report_.policy = policy;
    report_.d = cfg.d;
    report_.lambda = cfg.lambda;
    warmup_ = cfg.warmup;
    if (!cfg.capacity.is_infinite())
      report_.load_histogram.assign(
          static_cast<std::size_t>(cfg.capacity.value()) + 1, 0.0);
  }

  // Integrate the piecewise-constant observables over [cursor, t).
  void integrate_to(double t, const NetworkState& state) {
    const double lo = std::max(cursor_, warmup_);
    const double hi = t;
    if (hi > lo) {
      if (!entered_window_) {
        entered_window_ = true;
        report_.peak_max_sat =
            std::max(report_.peak_max_sat, state.observables().max_sat);
      }
      const double dt = hi - lo;
      report_.measured_time += dt;
      report_.call_time_integral +=
          static_cast<double>(state.total_calls()) * dt;
      const auto& cnt = state.links_at_load();
      if (report_.load_histogram.size() < cnt.size())
        report_.load_histogram.resize(cnt.size(), 0.0);
      for (std::size_t i = 0; i < cnt.size(); ++i)
        report_.load_histogram[i] += static_cast<double>(cnt[i]) * dt;
    }
    cursor_ = std::max(cursor_, t);
  }

  void count_arrival(double t, bool accepted) {
    if (t < warmup_) return;
    ++report_.arrivals;
    if (accepted)
      ++report_.accepted;
    else
      ++report_.blocked;
  }

  void note_sat_peak(double t, const NetworkState& state, int u, int v) {
    if (t < warmup_) return;
    report_.peak_max_sat = std::max(
        {report_.peak_max_sat, state.sat_at(u), state.sat_at(v)});
  }

  void take_snapshot(double t, const NetworkState& state, int replication) {
    Observables obs = state.observables();
    Snapshot snap;
    snap.replication = replication;
    snap.time = t;
    snap.total_calls = obs.total_calls;
    snap.max_sat = obs.max_sat;
    snap.mean_sat_at = obs.mean_sat_at();
    snap.mean_sat_via = obs.mean_sat_via();
    snap.blocked_cum = report_.blocked;
    snap.node_load = std::move(obs.node_load);
    snap.sat_at = std::move(obs.sat_at);
    snap.sat_via = std::move(obs.sat_via);
    report_.snapshots.push_back(std::move(snap));
  }

  void pair_sample(double count) {
    ++report_.pair_samples;
    const double delta = count - report_.pair_mean;
    report_.pair_mean += delta / static_cast<double>(report_.pair_samples);
    report_.pair_m2 += delta * (count - report_.pair_mean);
  }

  MetricsReport take() { return std::move(report_); }
  const MetricsReport& report() const { return report_; }

 private:
  MetricsReport report_;
  double warmup_ = 0.0;
  double cursor_ = 0.0;
  bool entered_window_ = false;
};

inline void trace_event(std::ostream* os, double t, const char* kind,
                        const CallRecord& call) {
  if (os == nullptr) return;
  char buf[256];
  int len = std::snprintf(buf, sizeof(buf),
                          "{\"t\":%.17g,\"kind\":\"%s\",\"u\":%d,\"v\":%d,"
                          "\"candidates\":[",
                          t, kind, call.u, call.v);
  os->write(buf, len);
  for (std::size_t i = 0; i < call.candidates.size(); ++i) {
    len = std::snprintf(buf, sizeof(buf), i == 0 ? "%d" : ",%d",
                        call.candidates[i]);
    os->write(buf, len);
  }
  len = std::snprintf(buf, sizeof(buf), "],\"chosen\":%d}\n", call.chosen);
  os->write(buf, len);
}

struct DepartureOrder {
  bool operator()(const std::pair<double, std::uint64_t>& a,
                  const std::pair<double, std::uint64_t>& b) const {
    return a > b;  // min-heap on (time, call id)
  }
};

using DepartureQueue =
    std::priority_queue<std::pair<double, std::uint64_t>,
                        std::vector<std::pair<double, std::uint64_t>>,
                        DepartureOrder>;

// Event-driven simulation of the capacitated process and the infinite
// capacity superprocess, plus the coupled pair used for domination tests.
class Engine {
 public:
  explicit Engine(const SimConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
  }

  RunResult run() {
    if (cfg_.mode == SimMode::kCoupled)
      throw ConfigError("use run_coupled for coupled mode");
    const auto t0 = std::chrono::steady_clock::now();
    const bool super = cfg_.mode == SimMode::kSuperprocess;

    NetworkState state = seed_initial_state();
    if (super) init_pair_counts(state);
    Accumulator acc;
    acc.init(cfg_, cfg_.policy);
    DepartureQueue departures = schedule_initial_departures(state);

    double next_snapshot = first_snapshot_time();
    double t_arrival = rng_.arrivals.exponential(arrival_rate());
    double last_t = 0.0;
    std::uint64_t events = 0;

    while (true) {
      const bool depart_next =
          !departures.empty() && departures.top().first <= t_arrival;
      const double t = depart_next ? departures.top().first : t_arrival;
      if (t > cfg_.horizon) break;
      if (cfg_.audit && t < last_t) throw Error("event times not monotone");

      drain_snapshots(next_snapshot, t, state, acc);
      acc.integrate_to(t, state);
      state.set_clock(t);

      if (depart_next) {
        const std::uint64_t id = departures.top().second;
        departures.pop();
        const CallRecord call = state.call(id);
        if (call.chosen == kNoChoice)
          state.apply_departure_all_routes(id);
        else
          state.apply_departure(id);
        if (super) bump_pair(call.u, call.v, -1);
        if (cfg_.audit) audit_after_departure(state, call);
        trace_event(cfg_.trace, t, "depart", call);
      } else {
        process_arrival(t, state, acc, departures, super);
        t_arrival = t + rng_.arrivals.exponential(arrival_rate());
      }

      ++events;
      last_t = t;
      if (cfg_.audit) audit_periodic(state, events);
      if (cfg_.on_event) cfg_.on_event(state, events);
      if (cfg_.max_events > 0 && events >= cfg_.max_events) break;
    }

    if (cfg_.max_events == 0 || events < cfg_.max_events) {
      drain_snapshots(next_snapshot, cfg_.horizon, state, acc);
      acc.integrate_to(cfg_.horizon, state);
      state.set_clock(cfg_.horizon);
    }

    RunResult result;
    result.metrics = acc.take();
    result.final_state = summarize(state);
    result.event_count = events;
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (cfg_.keep_final_state)
      result.final_full = std::make_shared<NetworkState>(std::move(state));
    return result;
  }

  CoupledResult run_coupled() {
    if (cfg_.mode != SimMode::kCoupled)
      throw ConfigError("run_coupled requires coupled mode");
    const auto t0 = std::chrono::steady_clock::now();

    NetworkState cap(cfg_.n, cfg_.capacity);
    NetworkState sup(cfg_.n, Capacity::infinite());
    init_pair_counts(sup);
    Accumulator cap_acc, sup_acc;
    cap_acc.init(cfg_, cfg_.policy);
    SimConfig sup_cfg = cfg_;
    sup_cfg.capacity = Capacity::infinite();
    sup_acc.init(sup_cfg, cfg_.policy);

    DepartureQueue departures;
    double next_snapshot = first_snapshot_time();
    double t_arrival = rng_.arrivals.exponential(arrival_rate());
    std::uint64_t events = 0;
    std::uint64_t violations = 0;

    while (true) {
      const bool depart_next =
          !departures.empty() && departures.top().first <= t_arrival;
      const double t = depart_next ? departures.top().first : t_arrival;
      if (t > cfg_.horizon) break;

      while (next_snapshot > 0.0 && next_snapshot <= t &&
             next_snapshot <= cfg_.horizon) {
        cap_acc.integrate_to(next_snapshot, cap);
        sup_acc.integrate_to(next_snapshot, sup);
        cap_acc.take_snapshot(next_snapshot, cap, cfg_.replication_tag);
        sup_acc.take_snapshot(next_snapshot, sup, cfg_.replication_tag);
        next_snapshot += cfg_.snapshot_every;
      }
      cap_acc.integrate_to(t, cap);
      sup_acc.integrate_to(t, sup);
      cap.set_clock(t);
      sup.set_clock(t);

      if (depart_next) {
        const std::uint64_t id = departures.top().second;
        departures.pop();
        const CallRecord sup_call = sup.call(id);
        sup.apply_departure_all_routes(id);
        bump_pair(sup_call.u, sup_call.v, -1);
        if (cap.has_call(id)) cap.apply_departure(id);
        trace_event(cfg_.trace, t, "depart", sup_call);
      } else {
        CallRecord call;
        call.id = next_id_++;
        draw_edge(call.u, call.v);
        call.candidates =
            sample_candidates(rng_.choices, cfg_.n, call.u, call.v, cfg_.d)
                .nodes;
        call.arrival = t;
        call.departure = t + rng_.durations.exponential(1.0);

        const int idx = select_route(cfg_.policy, rng_.choices, cap, call.u,
                                     call.v, call.candidates);
        if (idx != kNoChoice) {
          CallRecord cap_call = call;
          cap_call.chosen = idx;
          cap.apply_arrival(cap_call);
          cap_acc.count_arrival(t, true);
          cap_acc.note_sat_peak(t, cap, call.u, call.v);
          trace_event(cfg_.trace, t, "arrive-accept", cap_call);
        } else {
          cap_acc.count_arrival(t, false);
          trace_event(cfg_.trace, t, "arrive-block", call);
        }

        sup.apply_arrival_all_routes(call);
        bump_pair(call.u, call.v, +1);
        sup_acc.count_arrival(t, true);
        sup_acc.note_sat_peak(t, sup, call.u, call.v);
        departures.emplace(call.departure, call.id);
        t_arrival = t + rng_.arrivals.exponential(arrival_rate());
      }

      ++events;
      violations += domination_violations(cap, sup);
      if (cfg_.max_events > 0 && events >= cfg_.max_events) break;
    }

    if (cfg_.max_events == 0 || events < cfg_.max_events) {
      cap_acc.integrate_to(cfg_.horizon, cap);
      sup_acc.integrate_to(cfg_.horizon, sup);
    }

    CoupledResult result;
    result.violations = violations;
    result.event_count = events;
    result.capacitated.metrics = cap_acc.take();
    result.capacitated.final_state = summarize(cap);
    result.capacitated.event_count = events;
    result.superprocess.metrics = sup_acc.take();
    result.superprocess.final_state = summarize(sup);
    result.superprocess.event_count = events;
    result.capacitated.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.superprocess.wall_seconds = result.capacitated.wall_seconds;
    return result;
  }

 private:
  double arrival_rate() const {
    return cfg_.lambda * static_cast<double>(cfg_.n) *
           static_cast<double>(cfg_.n - 1) / 2.0;
  }

  double first_snapshot_time() const {
    return cfg_.snapshot_every > 0.0 ? cfg_.warmup + cfg_.snapshot_every : 0.0;
  }

  NetworkState seed_initial_state() {
    NetworkState state = new_state(cfg_.n, cfg_.capacity, cfg_.initial_calls);
    for (const CallRecord& c : cfg_.initial_calls)
      next_id_ = std::max(next_id_, c.id + 1);
    return state;
  }

  DepartureQueue schedule_initial_departures(const NetworkState& state) {
    DepartureQueue q;
    for (const auto& [id, call] : state.calls())
      q.emplace(call.departure, id);
    return q;
  }

  void draw_edge(int& u, int& v) {
    u = static_cast<int>(rng_.endpoints.below(static_cast<std::uint64_t>(cfg_.n)));
    v = static_cast<int>(
        rng_.endpoints.below(static_cast<std::uint64_t>(cfg_.n - 1)));
    if (v >= u) ++v;
  }

  void drain_snapshots(double& next_snapshot, double t,
                       const NetworkState& state, Accumulator& acc) {
    while (next_snapshot > 0.0 && next_snapshot <= t &&
           next_snapshot <= cfg_.horizon) {
      acc.integrate_to(next_snapshot, state);
      acc.take_snapshot(next_snapshot, state, cfg_.replication_tag);
      if (cfg_.mode == SimMode::kSuperprocess) sample_pairs(acc);
      next_snapshot += cfg_.snapshot_every;
    }
  }

  void process_arrival(double t, NetworkState& state, Accumulator& acc,
                       DepartureQueue& departures, bool super) {
    CallRecord call;
    call.id = next_id_++;
    draw_edge(call.u, call.v);
    call.candidates =
        sample_candidates(rng_.choices, cfg_.n, call.u, call.v, cfg_.d).nodes;
    call.arrival = t;
    call.departure = t + rng_.durations.exponential(1.0);

    if (super) {
      state.apply_arrival_all_routes(call);
      bump_pair(call.u, call.v, +1);
      departures.emplace(call.departure, call.id);
      acc.count_arrival(t, true);
      acc.note_sat_peak(t, state, call.u, call.v);
      trace_event(cfg_.trace, t, "arrive-accept", call);
      return;
    }

    const int idx = select_route(cfg_.policy, rng_.choices, state, call.u,
                                 call.v, call.candidates);
    if (cfg_.audit) {
      const bool any = !acceptance_set(state, call.u, call.v, call.candidates)
                            .empty();
      if (any != (idx != kNoChoice))
        throw Error("selection disagrees with acceptance set");
    }
    if (idx != kNoChoice) {
      call.chosen = idx;
      state.apply_arrival(call);
      departures.emplace(call.departure, call.id);
      acc.count_arrival(t, true);
      acc.note_sat_peak(t, state, call.u, call.v);
      if (cfg_.audit) audit_reversibility(state, call);
      trace_event(cfg_.trace, t, "arrive-accept", call);
    } else {
      acc.count_arrival(t, false);
      trace_event(cfg_.trace, t, "arrive-block", call);
    }
  }

  // Departing and re-arriving the call must restore the touched loads.
  void audit_reversibility(NetworkState& state, const CallRecord& call) {
    const int w = call.via();
    const int lu = state.load(call.u, w);
    const int lv = state.load(call.v, w);
    state.apply_departure(call.id);
    if (state.load(call.u, w) != lu - 1 || state.load(call.v, w) != lv - 1 ||
        state.has_call(call.id))
      throw Error("arrival/departure reversibility broken");
    state.apply_arrival(call);
    if (state.load(call.u, w) != lu || state.load(call.v, w) != lv)
      throw Error("arrival/departure reversibility broken");
  }

  void audit_after_departure(const NetworkState& state,
                             const CallRecord& call) {
    for (int w : NetworkState::distinct_routes(call)) {
      if (state.load(call.u, w) < 0 || state.load(call.v, w) < 0)
        throw Error("negative load after departure");
    }
  }

  void audit_periodic(const NetworkState& state, std::uint64_t events) {
    if (cfg_.mode == SimMode::kCapacitated &&
        state.load_sum() != 2 * static_cast<std::int64_t>(state.total_calls()))
      throw Error("load conservation broken");
    if (!cfg_.capacity.is_infinite() &&
        state.max_load_seen() > cfg_.capacity.value())
      throw Error("capacity bound broken");
    if (events % 65536 == 0) {
      const Observables inc = state.observables();
      const Observables ref = state.recompute_observables();
      if (inc.node_load != ref.node_load || inc.sat_at != ref.sat_at ||
          inc.sat_via != ref.sat_via || inc.max_sat != ref.max_sat)
        throw Error("incremental observables diverged from recompute");
    }
  }

  StateSummary summarize(const NetworkState& state) const {
    StateSummary s;
    s.clock = state.clock();
    s.total_calls = state.total_calls();
    s.max_sat = state.observables().max_sat;
    s.max_load_seen = state.max_load_seen();
    s.load_sum = state.load_sum();
    return s;
  }

  void init_pair_counts(const NetworkState& state) {
    pair_counts_.assign(
        static_cast<std::size_t>(cfg_.n) * static_cast<std::size_t>(cfg_.n), 0);
    for (const auto& [id, call] : state.calls()) bump_pair(call.u, call.v, +1);
  }

  void bump_pair(int u, int v, int delta) {
    const int a = u < v ? u : v;
    const int b = u < v ? v : u;
    pair_counts_[static_cast<std::size_t>(a) * static_cast<std::size_t>(cfg_.n) +
                 static_cast<std::size_t>(b)] += delta;
  }

  void sample_pairs(Accumulator& acc) {
    for (int a = 0; a < cfg_.n; ++a) {
      for (int b = a + 1; b < cfg_.n; ++b) {
        acc.pair_sample(static_cast<double>(
            pair_counts_[static_cast<std::size_t>(a) *
                             static_cast<std::size_t>(cfg_.n) +
                         static_cast<std::size_t>(b)]));
      }
    }
  }

  std::uint64_t domination_violations(const NetworkState& cap,
                                      const NetworkState& sup) const {
    std::uint64_t bad = 0;
    for (int v = 0; v < cfg_.n; ++v) {
      for (int u = 0; u < cfg_.n; ++u) {
        if (u == v) continue;
        if (cap.load(v, u) > sup.load(v, u)) {
          if (cfg_.audit)
            throw DominationViolation(
                "capacitated load exceeds superprocess on link " +
                std::to_string(v) + "->" + std::to_string(u));
          ++bad;
        }
      }
    }
    return bad;
  }

  SimConfig cfg_;
  RngStreams rng_;
  std::uint64_t next_id_ = 1;
  std::vector<int> pair_counts_;
};

}  // namespace detail

inline RunResult run_simulation(const SimConfig& config) {
  if (config.mode != SimMode::kCapacitated)
    throw ConfigError("run_simulation requires capacitated mode");
  return detail::Engine(config).run();
}

inline RunResult run_superprocess(const SimConfig& config) {
  if (config.mode != SimMode::kSuperprocess)
    throw ConfigError("run_superprocess requires superprocess mode");
  return detail::Engine(config).run();
}

inline CoupledResult run_coupled(const SimConfig& config) {
  return detail::Engine(config).run_coupled();
}

struct ImmigrationDeathResult {
  double time_average = 0.0;
  std::uint64_t arrivals = 0;
  std::uint64_t blocked = 0;
  std::uint64_t event_count = 0;
  double measured_time = 0.0;
  std::vector<double> histogram;  // time spent at each population level

  double blocking_fraction() const {
    return arrivals == 0
               ? 0.0
               : static_cast<double>(blocked) / static_cast<double>(arrivals);
  }

  // Histogram normalised to an empirical distribution.
  std::vector<double> stationary_distribution() const {
    std::vector<double> p(histogram);
    double total = 0.0;
    for (double x : p) total += x;
    if (total > 0.0)
      for (double& x : p) x /= total;
    return p;
  }
};

// Single immigration-death chain: births at a constant rate (rejected at the
// population cap), deaths at rate equal to the current population.
inline ImmigrationDeathResult run_immigration_death(double rate, Capacity cap,
                                                    double horizon,
                                                    double warmup,
                                                    std::uint64_t seed) {
  if (!(rate > 0.0)) throw ConfigError("rate must be > 0");
  if (horizon < 0.0 || warmup < 0.0 || warmup > horizon)
    throw ConfigError("need 0 <= warmup <= horizon");

  RngStreams rng(seed);
  ImmigrationDeathResult out;
  double t = 0.0;
  std::int64_t k = 0;
  double avg_integral = 0.0;

  auto integrate = [&](double to) {
    const double lo = std::max(t, warmup);
    const double hi = std::min(to, horizon);
    if (hi > lo) {
      const double dt = hi - lo;
      if (static_cast<std::size_t>(k) >= out.histogram.size())
        out.histogram.resize(static_cast<std::size_t>(k) + 1, 0.0);
      out.histogram[static_cast<std::size_t>(k)] += dt;
      avg_integral += static_cast<double>(k) * dt;
      out.measured_time += dt;
    }
  };

  while (true) {
    const double total_rate = rate + static_cast<double>(k);
    const double t_next = t + rng.arrivals.exponential(total_rate);
    if (t_next > horizon) {
      integrate(horizon);
      break;
    }
    integrate(t_next);
    t = t_next;
    const bool birth = rng.choices.uniform01() * total_rate <= rate;
    if (birth) {
      if (t >= warmup) ++out.arrivals;
      if (cap.full(static_cast<int>(k))) {
        if (t >= warmup) ++out.blocked;
      } else {
        ++k;
      }
    } else {
      --k;
    }
    ++out.event_count;
  }

  out.time_average =
      out.measured_time > 0.0 ? avg_integral / out.measured_time : 0.0;
  return out;
}

}  // namespace darsim

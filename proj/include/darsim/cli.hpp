#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "darsim/analytics.hpp"
#include "darsim/config.hpp"
#include "darsim/engine.hpp"
#include "darsim/errors.hpp"
#include "darsim/io.hpp"
#include "darsim/metrics.hpp"
#include "darsim/version.hpp"

namespace darsim {

// Exit codes: 0 success, 1 usage/parse, 2 validation, 3 verify failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitVerifyFailure = 3;

namespace cli_detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Seed precedence: command-line flag > DARSIM_SEED > config file.
inline void resolve_seed(SimConfig& cfg, const std::optional<std::uint64_t>& flag) {
  if (flag) {
    cfg.seed = *flag;
    return;
  }
  if (const char* env = std::getenv("DARSIM_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ValidationError("DARSIM_SEED is not a valid 64-bit seed");
    }
  }
}

template <typename Fn>
void parallel_for(int jobs, int count, Fn&& fn) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

inline MetricsReport run_replications(const SimConfig& base, int replications,
                                      int jobs) {
  std::vector<MetricsReport> reports(static_cast<std::size_t>(replications));
  parallel_for(jobs, replications, [&](int i) {
    SimConfig cfg = base;
    cfg.seed = replication_seed(base.seed, static_cast<std::uint64_t>(i));
    cfg.replication_tag = i;
    RunResult r = cfg.mode == SimMode::kSuperprocess ? run_superprocess(cfg)
                                                     : run_simulation(cfg);
    reports[static_cast<std::size_t>(i)] = std::move(r.metrics);
  });
  MetricsReport merged;
  for (const MetricsReport& r : reports) merged = merge(merged, r);
  return merged;
}

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::optional<std::string> output;
  std::optional<std::string> format;
};

inline void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* opt = cmd->add_option("--config", flags.config_path,
                              "experiment configuration file (TOML)");
  if (config_required) opt->required();
  cmd->add_option("--seed", [&flags](const std::vector<std::string>& vals) {
        flags.seed = std::stoull(vals.at(0));
        return true;
      },
      "master seed override (flag > DARSIM_SEED > config)");
  cmd->add_option("--jobs", flags.jobs, "replication worker threads");
  cmd->add_option("--output", flags.output, "output directory");
  cmd->add_option("--format", flags.format, "output format: csv or json");
}

inline ExperimentSpec load_spec(const CommonFlags& flags) {
  ExperimentSpec spec = parse_config(read_file(flags.config_path));
  resolve_seed(spec.base, flags.seed);
  if (flags.output) spec.output_dir = *flags.output;
  if (flags.format) spec.format = parse_format(*flags.format);
  return spec;
}

inline int cmd_simulate(const CommonFlags& flags, const std::string& trace_path,
                        std::ostream& out) {
  ExperimentSpec spec = load_spec(flags);
  if (spec.base.mode == SimMode::kCoupled)
    throw ValidationError("simulate does not run coupled mode; use verify");
  spec.base.validate();

  std::ofstream trace;
  SimConfig base = spec.base;
  if (!trace_path.empty()) {
    if (spec.replications != 1)
      throw ValidationError("--trace requires replications = 1");
    std::filesystem::path p(trace_path);
    if (!p.parent_path().empty())
      std::filesystem::create_directories(p.parent_path());
    trace.open(trace_path, std::ios::binary);
    if (!trace) throw ValidationError("cannot open trace file " + trace_path);
    base.trace = &trace;
  }

  const MetricsReport merged =
      run_replications(base, spec.replications, flags.jobs);
  const RunMeta meta = make_meta(spec);

  const std::filesystem::path dir(spec.output_dir);
  if (spec.format == OutputFormat::kJson)
    write_report_json(dir / "report.json", merged, meta);
  else
    write_report_csv(dir / "report.csv", merged, meta);

  out << "arrivals=" << merged.arrivals << " accepted=" << merged.accepted
      << " blocked=" << merged.blocked
      << " blocking_fraction=" << format_double(merged.blocking_fraction())
      << " mean_total_calls=" << format_double(merged.mean_total_calls())
      << "\n";
  return kExitOk;
}

inline int cmd_sweep(const CommonFlags& flags, std::ostream& out) {
  ExperimentSpec spec = load_spec(flags);
  if (!spec.sweep)
    throw ValidationError("sweep requires sweep_axis and sweep_values");
  if (spec.base.mode == SimMode::kCoupled)
    throw ValidationError("sweep does not run coupled mode");

  // Sort points by axis value so the summary table plots directly.
  std::vector<std::size_t> order(spec.sweep->values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto sort_key = [&](std::size_t i) -> double {
    const ConfigValue& v = spec.sweep->values[i];
    if (v.type == ConfigValue::Type::kInt ||
        v.type == ConfigValue::Type::kFloat)
      return v.as_number();
    return static_cast<double>(i);
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return sort_key(a) < sort_key(b);
                   });

  const RunMeta meta = make_meta(spec);
  const std::filesystem::path dir(spec.output_dir);
  std::vector<SweepRow> rows;
  for (std::size_t idx : order) {
    const ConfigValue& value = spec.sweep->values[idx];
    const std::string label = axis_value_label(value);
    SimConfig cfg = with_axis_value(spec.base, spec.sweep->name, value);
    // Per-point seed derived from the label so results do not depend on
    // the ordering of sweep_values.
    cfg.seed = spec.base.seed ^ fnv1a64(spec.sweep->name + "=" + label);
    cfg.validate();
    const MetricsReport merged =
        run_replications(cfg, spec.replications, flags.jobs);

    const std::string stem = "report_" + spec.sweep->name + "_" + label;
    if (spec.format == OutputFormat::kJson)
      write_report_json(dir / (stem + ".json"), merged, meta);
    else
      write_report_csv(dir / (stem + ".csv"), merged, meta);

    SweepRow row;
    row.label = label;
    row.sort_key = sort_key(idx);
    row.arrivals = merged.arrivals;
    row.blocked = merged.blocked;
    row.blocking_fraction = merged.blocking_fraction();
    row.wilson = merged.arrivals > 0
                     ? wilson_interval(merged.blocked, merged.arrivals, 0.95)
                     : Interval{0.0, 1.0, 0.95};
    rows.push_back(std::move(row));
  }

  if (spec.format == OutputFormat::kJson)
    write_sweep_summary_json(dir / "sweep_summary.json", spec.sweep->name,
                             rows, meta);
  else
    write_sweep_summary_csv(dir / "sweep_summary.csv", spec.sweep->name, rows,
                            meta);

  out << spec.sweep->name << " blocking_fraction wilson_lo wilson_hi\n";
  for (const SweepRow& r : rows) {
    out << r.label << " " << format_double(r.blocking_fraction) << " "
        << format_double(r.wilson.lo) << " " << format_double(r.wilson.hi)
        << "\n";
  }
  return kExitOk;
}

struct TheoryArgs {
  std::string op;
  double mu = 0.0;
  std::int64_t D = 0;
  std::int64_t servers = 0;
  double load = 0.0;
  double K = 0.0;
  int d = 2;
  double n = 0.0;
  double lambda = 1.0;
  double epsilon = 0.5;
};

inline void print_levels(const LevelSequence& seq, std::ostream& out) {
  if (seq.kind == LevelKind::kUpper)
    out << "# kind=upper h_start=" << seq.h_start << " h_star=" << seq.h_stop
        << "\n";
  else
    out << "# kind=lower h_start=" << seq.h_start << " h_max=" << seq.h_stop
        << "\n";
  out << "h alpha beta\n";
  for (const LevelEntry& e : seq.values)
    out << e.h << " " << format_double(e.alpha) << " " << format_double(e.beta)
        << "\n";
}

inline int cmd_theory(const TheoryArgs& args, std::ostream& out) {
  if (args.op == "poisson-tail") {
    out << format_double(poisson_tail(args.mu, args.D)) << "\n";
  } else if (args.op == "erlang-b") {
    out << format_double(erlang_b(args.servers, args.load)) << "\n";
  } else if (args.op == "fdar-alpha") {
    out << format_double(fdar_critical_alpha(args.K, args.d)) << "\n";
  } else if (args.op == "upper-levels") {
    print_levels(bdar_upper_levels(args.n, args.lambda, args.d, args.K), out);
  } else if (args.op == "lower-levels") {
    print_levels(bdar_lower_levels(args.n, args.lambda, args.d, args.epsilon),
                 out);
  } else {
    throw ValidationError("unknown theory op '" + args.op + "'");
  }
  return kExitOk;
}

struct VerifyArgs {
  std::string suite = "all";
  int n = 0;  // 0 = per-suite default
  int d = 2;
  int capacity = 1;
  double lambda = 2.0;
  std::uint64_t events = 100000;
  std::uint64_t seed = 1;
  int states = 1000;
};

inline bool verify_coupling(const VerifyArgs& args, std::ostream& out) {
  SimConfig cfg;
  cfg.mode = SimMode::kCoupled;
  cfg.n = args.n > 0 ? args.n : 10;
  cfg.lambda = args.lambda;
  cfg.d = args.d;
  cfg.capacity = Capacity::finite(args.capacity);
  cfg.policy = PolicyKind::kFirstFit;
  cfg.horizon = 1e18;
  cfg.warmup = 0.0;
  cfg.max_events = args.events;
  cfg.seed = args.seed;
  const CoupledResult r = run_coupled(cfg);
  out << "coupling: events=" << r.event_count
      << " violations=" << r.violations << "\n";
  return r.violations == 0;
}

inline bool verify_bounds(const VerifyArgs& args, std::ostream& out) {
  std::uint64_t violations = 0;
  std::uint64_t checked = 0;
  const std::vector<int> sizes =
      args.n > 0 ? std::vector<int>{args.n} : std::vector<int>{6, 8, 10};
  const int per_config =
      std::max(1, args.states / static_cast<int>(2 * sizes.size()));
  int config_idx = 0;
  for (int n : sizes) {
    for (int cap : {2, 3}) {
      SimConfig cfg;
      cfg.n = n;
      cfg.lambda = args.lambda;
      cfg.d = args.d;
      cfg.capacity = Capacity::finite(cap);
      cfg.policy = PolicyKind::kFirstFit;
      cfg.horizon = 1e18;
      cfg.warmup = 0.0;
      cfg.seed = args.seed + static_cast<std::uint64_t>(config_idx++);
      cfg.max_events = static_cast<std::uint64_t>(per_config) * 50;
      cfg.on_event = [&](const NetworkState& state, std::uint64_t event) {
        if (event % 50 != 0) return;
        ++checked;
        if (!blocking_bounds_hold(state, args.d).ok) ++violations;
      };
      (void)run_simulation(cfg);
    }
  }
  out << "bounds: states=" << checked << " violations=" << violations << "\n";
  return violations == 0;
}

inline bool verify_erlang(const VerifyArgs& args, std::ostream& out) {
  const double rate = 1.0;
  const int cap = 2;
  const ImmigrationDeathResult r = run_immigration_death(
      rate, Capacity::finite(cap), 200000.0, 100.0, args.seed);
  const double expected = erlang_b(cap, rate);
  const double p = r.blocking_fraction();
  const double se = std::sqrt(std::max(p * (1 - p), 1e-12) /
                              static_cast<double>(r.arrivals));
  const bool ok = std::abs(p - expected) <= 3 * se;
  out << "erlang: arrivals=" << r.arrivals << " empirical=" << format_double(p)
      << " expected=" << format_double(expected)
      << " tolerance=" << format_double(3 * se) << "\n";
  return ok;
}

inline bool verify_invariants(const VerifyArgs& args, std::ostream& out) {
  int failures = 0;
  int runs = 0;
  SplitMix64 mix(args.seed);
  for (int i = 0; i < 8; ++i) {
    SimConfig cfg;
    cfg.n = 6 + static_cast<int>(mix.next() % 20);
    cfg.lambda = 0.5 + static_cast<double>(mix.next() % 100) / 40.0;
    cfg.d = 1 + static_cast<int>(mix.next() % 3);
    cfg.capacity = (i % 4 == 3) ? Capacity::infinite()
                                : Capacity::finite(1 + static_cast<int>(
                                                       mix.next() % 4));
    cfg.policy = static_cast<PolicyKind>(i % 3);
    cfg.mode = (i % 4 == 2) ? SimMode::kSuperprocess : SimMode::kCapacitated;
    cfg.horizon = 1e18;
    cfg.warmup = 0.0;
    cfg.max_events = std::max<std::uint64_t>(1000, args.events / 8);
    cfg.seed = mix.next();
    cfg.audit = true;
    ++runs;
    try {
      if (cfg.mode == SimMode::kSuperprocess)
        (void)run_superprocess(cfg);
      else
        (void)run_simulation(cfg);
    } catch (const Error& e) {
      ++failures;
      out << "invariants: run " << i << " failed: " << e.what() << "\n";
    }
  }
  out << "invariants: runs=" << runs << " failures=" << failures << "\n";
  return failures == 0;
}

inline int cmd_verify(const VerifyArgs& args, std::ostream& out) {
  const bool all = args.suite == "all";
  if (!all && args.suite != "coupling" && args.suite != "bounds" &&
      args.suite != "erlang" && args.suite != "invariants")
    throw ValidationError("unknown verify suite '" + args.suite + "'");
  bool ok = true;
  if (all || args.suite == "coupling") ok &= verify_coupling(args, out);
  if (all || args.suite == "bounds") ok &= verify_bounds(args, out);
  if (all || args.suite == "erlang") ok &= verify_erlang(args, out);
  if (all || args.suite == "invariants") ok &= verify_invariants(args, out);
  out << (ok ? "verify: ok" : "verify: FAILED") << "\n";
  return ok ? kExitOk : kExitVerifyFailure;
}

}  // namespace cli_detail

// Parse argv (without the program name) and execute one subcommand.
inline int run_command(const std::vector<std::string>& args,
                       std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"desk-scale simulator and analytics for dynamic alternative "
               "routing on loss networks"};
  app.require_subcommand(1);

  cli_detail::CommonFlags sim_flags;
  std::string trace_path;
  auto* simulate = app.add_subcommand(
      "simulate", "run replications and write a merged report");
  cli_detail::add_common(simulate, sim_flags, true);
  simulate->add_option("--trace", trace_path,
                       "write a line-delimited event trace (1 replication)");

  cli_detail::CommonFlags sweep_flags;
  auto* sweep = app.add_subcommand(
      "sweep", "iterate a parameter axis and write a summary table");
  cli_detail::add_common(sweep, sweep_flags, true);

  cli_detail::TheoryArgs theory_args;
  auto* theory =
      app.add_subcommand("theory", "evaluate closed-form predictions");
  theory->add_option("--op", theory_args.op, "operation")->required();
  theory->add_option("--mu", theory_args.mu, "Poisson mean");
  theory->add_option("--D", theory_args.D, "capacity / tail start");
  theory->add_option("--servers", theory_args.servers, "Erlang servers");
  theory->add_option("--load", theory_args.load, "Erlang offered load");
  theory->add_option("--K", theory_args.K, "interval exponent");
  theory->add_option("--d", theory_args.d, "number of choices");
  theory->add_option("--n", theory_args.n, "node count");
  theory->add_option("--lambda", theory_args.lambda, "per-pair arrival rate");
  theory->add_option("--epsilon", theory_args.epsilon, "lower-level epsilon");

  cli_detail::VerifyArgs verify_args;
  auto* verify =
      app.add_subcommand("verify", "run invariant and oracle suites");
  verify->add_option("--suite", verify_args.suite,
                     "coupling | bounds | erlang | invariants | all");
  verify->add_option("--n", verify_args.n, "node count");
  verify->add_option("--d", verify_args.d, "number of choices");
  verify->add_option("--capacity", verify_args.capacity, "link capacity");
  verify->add_option("--lambda", verify_args.lambda, "per-pair arrival rate");
  verify->add_option("--events", verify_args.events, "event budget");
  verify->add_option("--seed", verify_args.seed, "seed");
  verify->add_option("--states", verify_args.states, "states to audit");

  std::vector<char*> argv;
  std::vector<std::string> owned;
  owned.reserve(args.size() + 1);
  owned.push_back("darsim");
  for (const std::string& a : args) owned.push_back(a);
  argv.reserve(owned.size());
  for (std::string& s : owned) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (simulate->parsed())
      return cli_detail::cmd_simulate(sim_flags, trace_path, out);
    if (sweep->parsed()) return cli_detail::cmd_sweep(sweep_flags, out);
    if (theory->parsed()) return cli_detail::cmd_theory(theory_args, out);
    if (verify->parsed()) return cli_detail::cmd_verify(verify_args, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}

}  // namespace darsim

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "darsim/config.hpp"
#include "darsim/engine.hpp"
#include "darsim/errors.hpp"
#include "darsim/metrics.hpp"
#include "darsim/version.hpp"

namespace darsim {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t x) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[x & 0xf];
    x >>= 4;
  }
  return s;
}

// Shortest round-trip decimal representation; deterministic across runs.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

// Canonical key=value serialization of the resolved experiment; hashing this
// ties every output file to the exact inputs that produced it.
inline std::string canonical_config_string(const ExperimentSpec& spec) {
  const SimConfig& c = spec.base;
  std::string s;
  s += "capacity=" + c.capacity.str();
  s += ";d=" + std::to_string(c.d);
  s += ";format=" + std::string(format_name(spec.format));
  s += ";horizon=" + format_double(c.horizon);
  s += ";lambda=" + format_double(c.lambda);
  s += ";max_events=" + std::to_string(c.max_events);
  s += ";mode=" + std::string(mode_name(c.mode));
  s += ";n=" + std::to_string(c.n);
  s += ";policy=" + std::string(policy_name(c.policy));
  s += ";replications=" + std::to_string(spec.replications);
  s += ";snapshot_every=" + format_double(c.snapshot_every);
  s += ";sweep=";
  if (spec.sweep) {
    s += spec.sweep->name + ":";
    for (std::size_t i = 0; i < spec.sweep->values.size(); ++i) {
      if (i) s += ",";
      s += axis_value_label(spec.sweep->values[i]);
    }
  } else {
    s += "none";
  }
  s += ";warmup=" + format_double(c.warmup);
  return s;
}

struct RunMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version = kVersion;
};

inline RunMeta make_meta(const ExperimentSpec& spec) {
  RunMeta meta;
  meta.config_hash = hex64(fnv1a64(canonical_config_string(spec)));
  meta.seed = spec.base.seed;
  return meta;
}

inline nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["n"] = r.n;
  j["capacity"] = r.capacity.str();
  j["policy"] = policy_name(r.policy);
  j["d"] = r.d;
  j["lambda"] = r.lambda;
  j["arrivals"] = r.arrivals;
  j["accepted"] = r.accepted;
  j["blocked"] = r.blocked;
  j["blocking_fraction"] = r.blocking_fraction();
  j["measured_time"] = r.measured_time;
  j["mean_total_calls"] = r.mean_total_calls();
  j["peak_max_sat"] = r.peak_max_sat;
  j["load_histogram"] = r.load_histogram;
  if (r.pair_samples > 0) {
    j["pair_samples"] = r.pair_samples;
    j["pair_mean"] = r.pair_mean;
    j["pair_variance"] = r.pair_variance();
  }
  nlohmann::json snaps = nlohmann::json::array();
  for (const Snapshot& s : r.snapshots) {
    nlohmann::json js;
    js["replication"] = s.replication;
    js["time"] = s.time;
    js["total_calls"] = s.total_calls;
    js["max_sat"] = s.max_sat;
    js["mean_sat_at"] = s.mean_sat_at;
    js["mean_sat_via"] = s.mean_sat_via;
    js["blocked_cum"] = s.blocked_cum;
    js["node_load"] = s.node_load;
    js["sat_at"] = s.sat_at;
    js["sat_via"] = s.sat_via;
    snaps.push_back(std::move(js));
  }
  j["snapshots"] = std::move(snaps);
  return j;
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::filesystem::create_directories(path.parent_path().empty()
                                          ? "."
                                          : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << content;
}

inline void write_report_json(const std::filesystem::path& path,
                              const MetricsReport& report,
                              const RunMeta& meta) {
  nlohmann::json j;
  j["config_hash"] = meta.config_hash;
  j["seed"] = meta.seed;
  j["version"] = meta.version;
  j["report"] = report_to_json(report);
  write_text_file(path, j.dump(2) + "\n");
}

// Snapshot CSV. Column order is part of the stable contract.
inline void write_report_csv(const std::filesystem::path& path,
                             const MetricsReport& report, const RunMeta& meta) {
  std::string s;
  s += "# config_hash=" + meta.config_hash + "\n";
  s += "# seed=" + std::to_string(meta.seed) + "\n";
  s += "# version=" + meta.version + "\n";
  s += "time,total_calls,max_sat,mean_sat_at,mean_sat_via,blocked_cum\n";
  for (const Snapshot& snap : report.snapshots) {
    s += format_double(snap.time);
    s += "," + std::to_string(snap.total_calls);
    s += "," + std::to_string(snap.max_sat);
    s += "," + format_double(snap.mean_sat_at);
    s += "," + format_double(snap.mean_sat_via);
    s += "," + std::to_string(snap.blocked_cum);
    s += "\n";
  }
  write_text_file(path, s);
}

struct SweepRow {
  std::string label;
  double sort_key = 0.0;
  std::uint64_t arrivals = 0;
  std::uint64_t blocked = 0;
  double blocking_fraction = 0.0;
  Interval wilson;
};

inline void write_sweep_summary_csv(const std::filesystem::path& path,
                                    const std::string& axis,
                                    const std::vector<SweepRow>& rows,
                                    const RunMeta& meta) {
  std::string s;
  s += "# config_hash=" + meta.config_hash + "\n";
  s += "# seed=" + std::to_string(meta.seed) + "\n";
  s += "# version=" + meta.version + "\n";
  s += axis + ",arrivals,blocked,blocking_fraction,wilson_lo,wilson_hi\n";
  for (const SweepRow& r : rows) {
    s += r.label;
    s += "," + std::to_string(r.arrivals);
    s += "," + std::to_string(r.blocked);
    s += "," + format_double(r.blocking_fraction);
    s += "," + format_double(r.wilson.lo);
    s += "," + format_double(r.wilson.hi);
    s += "\n";
  }
  write_text_file(path, s);
}

inline void write_sweep_summary_json(const std::filesystem::path& path,
                                     const std::string& axis,
                                     const std::vector<SweepRow>& rows,
                                     const RunMeta& meta) {
  nlohmann::json j;
  j["config_hash"] = meta.config_hash;
  j["seed"] = meta.seed;
  j["version"] = meta.version;
  j["axis"] = axis;
  nlohmann::json arr = nlohmann::json::array();
  for (const SweepRow& r : rows) {
    nlohmann::json row;
    row["value"] = r.label;
    row["arrivals"] = r.arrivals;
    row["blocked"] = r.blocked;
    row["blocking_fraction"] = r.blocking_fraction;
    row["wilson_lo"] = r.wilson.lo;
    row["wilson_hi"] = r.wilson.hi;
    arr.push_back(std::move(row));
  }
  j["rows"] = std::move(arr);
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace darsim

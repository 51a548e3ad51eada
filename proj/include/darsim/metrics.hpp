#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "darsim/errors.hpp"
#include "darsim/policy.hpp"
#include "darsim/state.hpp"

namespace darsim {

// One sampled point of the observables time series.
struct Snapshot {
  int replication = 0;
  double time = 0.0;
  std::uint64_t total_calls = 0;
  int max_sat = 0;
  double mean_sat_at = 0.0;
  double mean_sat_via = 0.0;
  std::uint64_t blocked_cum = 0;
  std::vector<std::int64_t> node_load;
  std::vector<int> sat_at;
  std::vector<int> sat_via;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.0;
};

// Aggregated statistics of one run (or a merge of compatible runs).
// Time-weighted quantities are stored as raw integrals so that merge stays
// associative; derived ratios are computed on demand.
struct MetricsReport {
  bool key_set = false;
  int n = 0;
  Capacity capacity;
  PolicyKind policy = PolicyKind::kFirstFit;
  int d = 0;
  double lambda = 0.0;

  std::uint64_t arrivals = 0;
  std::uint64_t accepted = 0;
  std::uint64_t blocked = 0;

  double measured_time = 0.0;
  double call_time_integral = 0.0;        // integral of |X_t| over the window
  std::vector<double> load_histogram;     // link-time at each load value
  int peak_max_sat = 0;
  std::vector<Snapshot> snapshots;

  // Superprocess per-pair active-call samples (Welford accumulators).
  std::uint64_t pair_samples = 0;
  double pair_mean = 0.0;
  double pair_m2 = 0.0;

  double blocking_fraction() const {
    return arrivals == 0
               ? 0.0
               : static_cast<double>(blocked) / static_cast<double>(arrivals);
  }

  double mean_total_calls() const {
    return measured_time == 0.0 ? 0.0 : call_time_integral / measured_time;
  }

  double pair_variance() const {
    return pair_samples < 2 ? 0.0
                            : pair_m2 / static_cast<double>(pair_samples - 1);
  }
};

// Replication aggregation. Associative and commutative; a default
// constructed report is the identity element.
inline MetricsReport merge(const MetricsReport& a, const MetricsReport& b) {
  if (!a.key_set) return b;
  if (!b.key_set) return a;
  if (a.n != b.n || !(a.capacity == b.capacity) || a.policy != b.policy)
    throw IncompatibleReports("cannot merge reports with different n/D/policy");

  MetricsReport out = a;
  out.arrivals += b.arrivals;
  out.accepted += b.accepted;
  out.blocked += b.blocked;
  out.measured_time += b.measured_time;
  out.call_time_integral += b.call_time_integral;
  out.peak_max_sat = std::max(a.peak_max_sat, b.peak_max_sat);

  if (out.load_histogram.size() < b.load_histogram.size())
    out.load_histogram.resize(b.load_histogram.size(), 0.0);
  for (std::size_t i = 0; i < b.load_histogram.size(); ++i)
    out.load_histogram[i] += b.load_histogram[i];

  out.snapshots.insert(out.snapshots.end(), b.snapshots.begin(),
                       b.snapshots.end());

  // Parallel Welford combine.
  const std::uint64_t na = a.pair_samples;
  const std::uint64_t nb = b.pair_samples;
  if (nb > 0) {
    if (na == 0) {
      out.pair_samples = nb;
      out.pair_mean = b.pair_mean;
      out.pair_m2 = b.pair_m2;
    } else {
      const double total = static_cast<double>(na + nb);
      const double delta = b.pair_mean - a.pair_mean;
      out.pair_samples = na + nb;
      out.pair_mean = a.pair_mean + delta * static_cast<double>(nb) / total;
      out.pair_m2 = a.pair_m2 + b.pair_m2 +
                    delta * delta * static_cast<double>(na) *
                        static_cast<double>(nb) / total;
    }
  }
  return out;
}

namespace detail {

// Acklam's rational approximation to the standard normal quantile.
// Relative error below 1.2e-9 over (0, 1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile needs p in (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > 1 - plow) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
             c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
         q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

}  // namespace detail

// Wilson score interval; valid near 0 and 1 where Wald degenerates.
inline Interval wilson_interval(std::uint64_t successes, std::uint64_t trials,
                                double level) {
  if (trials == 0) throw DomainError("wilson_interval needs trials > 0");
  if (successes > trials)
    throw DomainError("wilson_interval needs successes <= trials");
  if (!(level > 0.0 && level < 1.0))
    throw DomainError("confidence level must be in (0,1)");
  const double z = detail::normal_quantile(1.0 - (1.0 - level) / 2.0);
  const double nn = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half =
      z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  Interval out;
  out.level = level;
  out.lo = std::max(0.0, center - half);
  out.hi = std::min(1.0, center + half);
  return out;
}

}  // namespace darsim

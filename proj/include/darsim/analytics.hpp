#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include "darsim/errors.hpp"
#include "darsim/state.hpp"

namespace darsim {

namespace detail {

// Regularized lower incomplete gamma P(a, x), series branch (x < a + 1).
inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int k = 1; k < 10000; ++k) {
    term *= x / (a + k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  const double lg = -x + a * std::log(x) - std::lgamma(a);
  return sum * std::exp(lg);
}

// Regularized upper incomplete gamma Q(a, x), Lentz continued fraction
// (x >= a + 1).
inline double gamma_q_cf(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-17) break;
  }
  const double lg = -x + a * std::log(x) - std::lgamma(a);
  return std::exp(lg) * h;
}

}  // namespace detail

/// Probability that a Po(mu) variable takes value at least D.
/// Stable across the full range via the regularized incomplete gamma;
/// values below about 1e-300 underflow to 0 (documented floor).
inline double poisson_tail(double mu, std::int64_t D) {
  if (!(mu >= 0.0)) throw DomainError("poisson_tail needs mu >= 0");
  if (D < 0) throw DomainError("poisson_tail needs D >= 0");
  if (D == 0) return 1.0;
  if (mu == 0.0) return 0.0;
  const double a = static_cast<double>(D);
  // Pr(Po(mu) >= D) = P(D, mu), the regularized lower incomplete gamma.
  if (mu < a + 1.0) return detail::gamma_p_series(a, mu);
  return 1.0 - detail::gamma_q_cf(a, mu);
}

/// Erlang B blocking probability of an M/M/D/D loss system with offered
/// load a, via the standard stable recursion.
inline double erlang_b(std::int64_t D, double a) {
  if (!(a > 0.0)) throw DomainError("erlang_b needs offered load > 0");
  if (D < 0) throw DomainError("erlang_b needs D >= 0");
  double b = 1.0;
  for (std::int64_t k = 1; k <= D; ++k)
    b = a * b / (static_cast<double>(k) + a * b);
  return b;
}

/// Capacity prefactor threshold for first-fit routing with D of order
/// alpha * ln n / ln ln n over an interval of length n^K.
inline double fdar_critical_alpha(double K, int d) {
  if (!(K > 0.0)) throw DomainError("fdar_critical_alpha needs K > 0");
  if (d < 1) throw DomainError("fdar_critical_alpha needs d >= 1");
  const double dd = static_cast<double>(d);
  return K < dd - 2.0 ? (K + 2.0) / dd : K + 3.0 - dd;
}

enum class LevelKind { kUpper, kLower };

struct LevelEntry {
  int h = 0;
  double alpha = 0.0;     // per-node link-count threshold
  double beta = 0.0;      // alpha / (n - 1)
  double log_beta = 0.0;  // natural log, exact even when beta underflows
};

// The alpha_h / beta_h sequences driving the layered height induction,
// exposed as analytic predictors.
struct LevelSequence {
  LevelKind kind = LevelKind::kUpper;
  std::vector<LevelEntry> values;
  int h_start = 0;
  int h_stop = 0;  // h* for the upper sequence, h_max for the lower one
  double n = 0.0;
  double lambda = 0.0;
  int d = 0;
  double K = 0.0;
  double epsilon = 0.0;

  int h_star() const { return h_stop; }
};

/// Decreasing upper-bound level sequence: starts at
/// h0 = ceil(max{8 lambda, 768 lambda^2}) with
/// alpha_h0 = min{(n-1)/8, (n-1)/(768 lambda)}, iterates
/// alpha_h/(n-1) = 6 lambda (8 alpha_{h-1}/(n-1))^d until
/// alpha_h < 14(K+2) ln n, raises that term to the threshold and appends
/// alpha_{h*+1} = 2K+5.
inline LevelSequence bdar_upper_levels(double n, double lambda, int d,
                                       double K) {
  if (!(n >= 4.0)) throw DomainError("bdar_upper_levels needs n >= 4");
  if (!(lambda > 0.0)) throw DomainError("bdar_upper_levels needs lambda > 0");
  if (d < 1) throw DomainError("bdar_upper_levels needs d >= 1");
  if (!(K > 0.0)) throw DomainError("bdar_upper_levels needs K > 0");

  LevelSequence seq;
  seq.kind = LevelKind::kUpper;
  seq.n = n;
  seq.lambda = lambda;
  seq.d = d;
  seq.K = K;

  const int h0 = static_cast<int>(
      std::ceil(std::max(8.0 * lambda, 768.0 * lambda * lambda)));
  const double alpha_h0 =
      std::min((n - 1.0) / 8.0, (n - 1.0) / (768.0 * lambda));
  const double threshold = 14.0 * (K + 2.0) * std::log(n);
  if (!(alpha_h0 >= threshold))
    throw DomainError("n too small for the upper-level regime");
  if (!(48.0 * lambda * (8.0 * alpha_h0 / (n - 1.0)) <= 0.5))
    throw DomainError("n too small for the upper-level regime");

  auto push = [&](int h, double alpha) {
    LevelEntry e;
    e.h = h;
    e.alpha = alpha;
    e.beta = alpha / (n - 1.0);
    e.log_beta = std::log(e.beta);
    seq.values.push_back(e);
  };

  push(h0, alpha_h0);
  double alpha = alpha_h0;
  int h = h0;
  while (true) {
    ++h;
    if (h - h0 > 1000000)
      throw DomainError("upper-level recurrence failed to reach threshold");
    alpha = 6.0 * lambda * std::pow(8.0 * alpha / (n - 1.0), d) * (n - 1.0);
    if (alpha < threshold) break;
    push(h, alpha);
  }
  const int h_star = h;
  push(h_star, threshold);        // raised to 14(K+2) ln n
  push(h_star + 1, 2.0 * K + 5.0);
  seq.h_start = h0;
  seq.h_stop = h_star;
  return seq;
}

/// Lower-bound level sequence: beta_0 = 1 and beta_h = (nu/h) beta_{h-1}^d
/// with nu = min{1, lambda} / (24 e^d), evaluated in log space down to the
/// largest h with beta_h >= (n-1)^(-epsilon).
inline LevelSequence bdar_lower_levels(double n, double lambda, int d,
                                       double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw DomainError("bdar_lower_levels needs epsilon in (0,1)");
  if (!(n >= 4.0)) throw DomainError("bdar_lower_levels needs n >= 4");
  if (!(lambda > 0.0)) throw DomainError("bdar_lower_levels needs lambda > 0");
  if (d < 1) throw DomainError("bdar_lower_levels needs d >= 1");

  LevelSequence seq;
  seq.kind = LevelKind::kLower;
  seq.n = n;
  seq.lambda = lambda;
  seq.d = d;
  seq.epsilon = epsilon;
  seq.h_start = 0;

  const double log_nu = std::log(std::min(1.0, lambda)) - std::log(24.0) -
                        static_cast<double>(d);
  const double floor_log = -epsilon * std::log(n - 1.0);

  auto push = [&](int h, double log_beta) {
    LevelEntry e;
    e.h = h;
    e.log_beta = log_beta;
    e.beta = std::exp(log_beta);
    e.alpha = (n - 1.0) * e.beta;
    seq.values.push_back(e);
  };

  push(0, 0.0);
  double lb = 0.0;
  int h = 0;
  while (true) {
    const double next =
        log_nu - std::log(static_cast<double>(h + 1)) + d * lb;
    if (next < floor_log) break;
    ++h;
    lb = next;
    push(h, lb);
    if (h > 1000000) break;
  }
  seq.h_stop = h;
  return seq;
}

// Exact failure probability of a uniformly random arriving call at a given
// state, with the four per-state bounds derived from the saturation degrees
// d(v) and their maximum.
struct BlockingBounds {
  double exact = 0.0;
  double lb_min = 0.0;  // (min_v d(v)/(n-2))^d
  double lb_sum = 0.0;  // n^-1 sum_v (d(v)/(n-2))^d
  double ub_sum = 0.0;  // 2^{d+1} n^-1 sum_v (d(v)/(n-2))^d
  double ub_max = 0.0;  // (2 max_v d(v)/(n-2))^d
};

inline BlockingBounds exact_failure_probability(const LoadMatrixView& view,
                                                int d) {
  if (view.n < 3) throw DomainError("exact failure probability needs n >= 3");
  if (view.capacity.is_infinite())
    throw DomainError("exact failure probability needs finite capacity");
  if (d < 1) throw DomainError("exact failure probability needs d >= 1");

  const int n = view.n;
  const int words = (n + 63) / 64;
  // Saturated-out-neighbour bitset per node.
  std::vector<std::uint64_t> sat(
      static_cast<std::size_t>(n) * static_cast<std::size_t>(words), 0);
  std::vector<int> deg(static_cast<std::size_t>(n), 0);
  for (int v = 0; v < n; ++v) {
    for (int w = 0; w < n; ++w) {
      if (v == w) continue;
      if (view.capacity.saturates(view.at(v, w))) {
        sat[static_cast<std::size_t>(v) * words + w / 64] |=
            std::uint64_t{1} << (w % 64);
        ++deg[static_cast<std::size_t>(v)];
      }
    }
  }

  BlockingBounds out;
  const double nm2 = static_cast<double>(n - 2);
  const int min_deg = *std::min_element(deg.begin(), deg.end());
  const int max_deg = *std::max_element(deg.begin(), deg.end());
  double deg_sum = 0.0;
  for (int v = 0; v < n; ++v)
    deg_sum += std::pow(static_cast<double>(deg[v]) / nm2, d);
  out.lb_min = std::pow(static_cast<double>(min_deg) / nm2, d);
  out.lb_sum = deg_sum / static_cast<double>(n);
  out.ub_sum = std::pow(2.0, d + 1) * out.lb_sum;
  out.ub_max = std::pow(2.0 * static_cast<double>(max_deg) / nm2, d);

  // exact = (1/C(n,2)) sum_{u<v} f(u,v)^d with
  // f(u,v) = |{w not in {u,v} : u->w or v->w saturated}| / (n-2).
  double total = 0.0;
  for (int u = 0; u < n; ++u) {
    const std::uint64_t* su = &sat[static_cast<std::size_t>(u) * words];
    for (int v = u + 1; v < n; ++v) {
      const std::uint64_t* sv = &sat[static_cast<std::size_t>(v) * words];
      int blocked = 0;
      for (int k = 0; k < words; ++k)
        blocked += std::popcount(su[k] | sv[k]);
      blocked -= static_cast<int>(
          ((su[u / 64] | sv[u / 64]) >> (u % 64)) & 1ULL);
      blocked -= static_cast<int>(
          ((su[v / 64] | sv[v / 64]) >> (v % 64)) & 1ULL);
      total += std::pow(static_cast<double>(blocked) / nm2, d);
    }
  }
  const double pairs = static_cast<double>(n) * (n - 1.0) / 2.0;
  out.exact = total / pairs;
  return out;
}

inline BlockingBounds exact_failure_probability(const NetworkState& state,
                                                int d) {
  return exact_failure_probability(state.view(), d);
}

// Result of auditing the bound chain
// lb_min <= lb_sum <= exact <= ub_sum and exact <= ub_max.
struct BoundsCheck {
  bool ok = false;
  BlockingBounds bounds;
  double slack_lb_min = 0.0;  // lb_sum - lb_min
  double slack_lb_sum = 0.0;  // exact - lb_sum
  double slack_ub_sum = 0.0;  // ub_sum - exact
  double slack_ub_max = 0.0;  // ub_max - exact
  double tightest = 0.0;
};

inline BoundsCheck blocking_bounds_hold(const LoadMatrixView& view, int d) {
  BoundsCheck check;
  check.bounds = exact_failure_probability(view, d);
  const BlockingBounds& b = check.bounds;
  check.slack_lb_min = b.lb_sum - b.lb_min;
  check.slack_lb_sum = b.exact - b.lb_sum;
  check.slack_ub_sum = b.ub_sum - b.exact;
  check.slack_ub_max = b.ub_max - b.exact;
  check.tightest = std::min({check.slack_lb_min, check.slack_lb_sum,
                             check.slack_ub_sum, check.slack_ub_max});
  check.ok = check.tightest >= -1e-12;
  return check;
}

inline BoundsCheck blocking_bounds_hold(const NetworkState& state, int d) {
  return blocking_bounds_hold(state.view(), d);
}

}  // namespace darsim

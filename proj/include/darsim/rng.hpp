#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace darsim {

// splitmix64, used only to expand seeds into generator state.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// xoshiro256++, seeded via splitmix64. Fixed algorithm so that a seed
// reproduces the identical stream on every platform.
class Xoshiro256 {
 public:
  Xoshiro256() : Xoshiro256(0) {}

  explicit Xoshiro256(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm.next();
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform draw in (0, 1]; never returns 0 so logs are safe.
  double uniform01() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
  }

  // Unbiased uniform integer in [0, bound). Lemire's method.
  std::uint64_t below(std::uint64_t bound) {
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      const std::uint64_t cutoff = (0 - bound) % bound;
      while (lo < cutoff) {
        m = static_cast<unsigned __int128>(next()) * bound;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  double exponential(double rate) { return -std::log(uniform01()) / rate; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> s_{};
};

// The four independent substreams that drive a replication. Consuming from
// one stream never perturbs another, so event sequences are replay-stable
// under policy changes that alter only selection draws.
struct RngStreams {
  Xoshiro256 arrivals;   // inter-arrival times
  Xoshiro256 endpoints;  // edge selection
  Xoshiro256 choices;    // candidate sampling + uniform-feasible draws
  Xoshiro256 durations;  // Exp(1) holding times

  explicit RngStreams(std::uint64_t master)
      : arrivals(derive(master, 0x61727276ULL)),
        endpoints(derive(master, 0x656e6470ULL)),
        choices(derive(master, 0x63686f69ULL)),
        durations(derive(master, 0x64757261ULL)) {}

  static std::uint64_t derive(std::uint64_t master, std::uint64_t tag) {
    SplitMix64 sm(master ^ (tag * 0x9e3779b97f4a7c15ULL));
    return sm.next();
  }
};

// Per-replication seed derivation for multi-run experiments.
inline std::uint64_t replication_seed(std::uint64_t master, std::uint64_t rep) {
  SplitMix64 sm(master + 0x632be59bd9b4e019ULL * (rep + 1));
  return sm.next();
}

}  // namespace darsim

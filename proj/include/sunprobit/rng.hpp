#pragma once

#include <cstdint>
#include <random>

namespace sunprobit {

namespace detail {

// splitmix64; used only to spread user seeds across derived streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

} // namespace detail

// Deterministic stream derivation: stream(seed, i, j) is independent of how
// many other streams were created and of thread scheduling, so parallel
// consumers replay identically.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t s = seed;
  std::uint64_t h = detail::splitmix64(s);
  s ^= a + 0x9e3779b97f4a7c15ULL;
  h ^= detail::splitmix64(s);
  s ^= b + 0xbf58476d1ce4e5b9ULL;
  h ^= detail::splitmix64(s);
  return h;
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream_a, std::uint64_t stream_b = 0)
      : gen_(derive_seed(seed, stream_a, stream_b)) {}

  // Uniform on the open interval (0,1); never returns an exact 0 or 1, so
  // quantile transforms stay finite.
  double uniform() {
    std::uint64_t bits = gen_() >> 11;
    return (static_cast<double>(bits) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double normal() { return normal_(gen_); }

  std::uint64_t raw() { return gen_(); }

private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace sunprobit

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace fcg {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a list of tags
/// (purpose, epoch, draw index, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(base);
  for (auto t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

/// SplitMix64 as a UniformRandomBitGenerator. One word of state, so seeding
/// is free; used for the short per-call streams of the samplers, where
/// seeding an mt19937_64 would dominate the cost of a draw.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    const std::uint64_t out = splitmix64(state_);
    state_ += 0x9e3779b97f4a7c15ULL;
    return out;
  }

 private:
  std::uint64_t state_;
};

/// Uniform draw on (0, 1]; never returns 0 so -log(u) stays finite.
template <typename Engine>
double uniform_open0(Engine& rng) {
  // 53 random mantissa bits, shifted by one ulp off zero.
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on our own uniforms (portable across std libs).
template <typename Engine>
double standard_normal(Engine& rng) {
  const double u1 = uniform_open0(rng);
  const double u2 = uniform_open0(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// Seed tags keep the RNG streams of different purposes apart.
enum class SeedPurpose : std::uint64_t {
  kInit = 1,
  kSampling = 2,
  kSynthetic = 3,
  kSplit = 4,
  kSpectral = 5,
  kProbe = 6,
};

inline std::uint64_t tag(SeedPurpose p) { return static_cast<std::uint64_t>(p); }

}  // namespace fcg

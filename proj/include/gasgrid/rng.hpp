#pragma once

#include <cstdint>

#include "gasgrid/gaussian.hpp"

namespace gasgrid {

/// Counter-based deterministic random stream. Each draw is a pure function of
/// (seed, scenario, step, channel), so scenarios can be generated in any
/// order, in parallel, or re-generated one at a time with identical results.
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t key(std::uint64_t seed, std::uint64_t scenario, std::uint64_t step,
                         std::uint64_t channel) {
  std::uint64_t z = splitmix64(seed);
  z = splitmix64(z ^ (0x9e3779b97f4a7c15ULL + scenario));
  z = splitmix64(z ^ (0xc2b2ae3d27d4eb4fULL + step));
  z = splitmix64(z ^ (0x165667b19e3779f9ULL + channel));
  return z;
}

/// Uniform draw strictly inside (0, 1); 53-bit mantissa offset by half an ulp
/// so the endpoints are unreachable.
inline double uniform_open(std::uint64_t seed, std::uint64_t scenario, std::uint64_t step,
                           std::uint64_t channel) {
  const std::uint64_t z = key(seed, scenario, step, channel);
  return (static_cast<double>(z >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal draw via the inverse CDF of a counter-based uniform.
inline double std_normal(std::uint64_t seed, std::uint64_t scenario, std::uint64_t step,
                         std::uint64_t channel) {
  return inv_std_normal(uniform_open(seed, scenario, step, channel));
}

}  // namespace rng
}  // namespace gasgrid

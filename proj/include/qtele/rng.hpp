#pragma once

#include <cstdint>
#include <random>

namespace qtele {

using Rng = std::mt19937_64;

/// Named sub-streams of one scenario seed.
enum class StreamTag : std::uint64_t {
  SimBlock = 1,
  Clock = 2,
  Attenuation = 3,
  MonteCarlo = 4,
  Run = 5,
};

/// Deterministic seed for sub-stream (tag, index) of `seed` (splitmix64
/// finalizer applied to each component).
inline std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag,
                                 std::uint64_t index = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ static_cast<std::uint64_t>(tag)) ^ index);
}

inline Rng make_rng(std::uint64_t seed, StreamTag tag, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, tag, index));
}

}  // namespace qtele

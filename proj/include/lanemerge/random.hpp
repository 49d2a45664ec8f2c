#pragma once

#include <cstdint>
#include <random>

namespace lanemerge {

using Rng = std::mt19937_64;

// Named sub-streams fanned out from one manifest seed.
enum class Stream : std::uint64_t {
  kScenario = 1,
  kDrivers = 2,
  kController = 3,
  kSpawn = 4,
  kExport = 5,
  kYield = 6,
  kNoise = 7,
};

// Counter-based split: mixes (seed, stream, index) through splitmix64 so that
// adding a consumer of one stream never shifts another.
std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

// Uniform draw on [lo, hi) from 53 random bits. Returns lo exactly when lo == hi.
inline double uniform(Rng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

inline bool bernoulli(Rng& rng, double p) { return uniform(rng, 0.0, 1.0) < p; }

// Stateless draw on [0, 1) keyed by (seed, stream, counter).
inline double hashed_unit(std::uint64_t seed, Stream stream, std::uint64_t counter) {
  return static_cast<double>(derive_seed(seed, stream, counter) >> 11) * 0x1.0p-53;
}

}  // namespace lanemerge

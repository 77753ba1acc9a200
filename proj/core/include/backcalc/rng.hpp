#pragma once

#include <cstdint>
#include <random>

namespace backcalc {

using Rng = std::mt19937_64;

// Independent generator for replicate `stream` of a run seeded with `seed`.
// Streams depend only on (seed, stream), so serial and parallel execution
// see identical draws.
inline Rng stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
  return Rng(seq);
}

}  // namespace backcalc

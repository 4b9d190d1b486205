#pragma once

#include <cstdint>
#include <random>

namespace nilwalk {

// Independent generator for one (seed, stream, index) triple. Every path of a
// Monte-Carlo run gets its own generator, so results do not depend on how
// paths are distributed over threads.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(stream), hi(stream), lo(index), hi(index)};
  return std::mt19937_64(seq);
}

// Stream tags keep different consumers of one master seed apart.
namespace streams {
inline constexpr std::uint64_t walk = 1;
inline constexpr std::uint64_t euler = 2;
inline constexpr std::uint64_t castell = 3;
inline constexpr std::uint64_t rough_path = 4;
inline constexpr std::uint64_t permutation = 5;
inline constexpr std::uint64_t ergodic = 6;
inline constexpr std::uint64_t newton_starts = 7;
inline constexpr std::uint64_t perturbation = 8;
inline constexpr std::uint64_t subsample = 9;
}  // namespace streams

}  // namespace nilwalk

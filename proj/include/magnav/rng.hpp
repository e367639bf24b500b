#pragma once

#include <cstdint>
#include <random>

namespace magnav::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of an independent stream derived from (master, stream id). Streams
/// depend only on the pair, never on the order in which they are drawn.
inline constexpr std::uint64_t stream_seed(std::uint64_t master,
                                           std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(~stream));
}

/// Sub-stream tags within one run.
enum class Stream : std::uint64_t { kMeasurement = 1, kProcess = 2, kInitial = 3 };

inline std::mt19937_64 make_engine(std::uint64_t run_seed, Stream s) {
  return std::mt19937_64(stream_seed(run_seed, static_cast<std::uint64_t>(s)));
}

}  // namespace magnav::rng

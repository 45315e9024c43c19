#pragma once

#include <cstdint>

namespace qrsrm {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent seed for (run seed, stream, index). Streams keep exploration,
/// environment noise and evaluation episodes from sharing draws.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return mix64(mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL)) ^ index);
}

namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kExplore = 2;
inline constexpr std::uint64_t kTrainEnv = 3;
inline constexpr std::uint64_t kReplay = 4;
inline constexpr std::uint64_t kEval = 5;
inline constexpr std::uint64_t kReport = 6;
}  // namespace stream

}  // namespace qrsrm

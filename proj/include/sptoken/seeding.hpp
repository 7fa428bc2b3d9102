#pragma once

#include <cstdint>

namespace sptoken {

/// SplitMix64 finalizer; derives independent stream seeds from a master seed.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(mix64(master) ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

// Stream tags for the independent random sources of one realization.
inline constexpr std::uint64_t kEnvStream = 1;
inline constexpr std::uint64_t kAgentStream = 2;
inline constexpr std::uint64_t kRelayStream = 3;
inline constexpr std::uint64_t kLedgerStream = 4;

}  // namespace sptoken

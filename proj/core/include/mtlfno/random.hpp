#pragma once

#include <cstdint>
#include <random>

namespace mtlfno {

using Rng = std::mt19937_64;

/// SplitMix64 step; used to derive independent stream seeds from one master seed.
std::uint64_t splitmix64(std::uint64_t& state);

/// Seeds of the initialization, shuffling and data-generation streams.
struct SeedStreams {
  std::uint64_t init = 0;
  std::uint64_t shuffle = 0;
  std::uint64_t generator = 0;
};

SeedStreams derive_seeds(std::uint64_t master);

}  // namespace mtlfno

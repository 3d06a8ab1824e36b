#include "mtlfno/random.hpp"

namespace mtlfno {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SeedStreams derive_seeds(std::uint64_t master) {
  std::uint64_t s = master;
  SeedStreams out;
  out.init = splitmix64(s);
  out.shuffle = splitmix64(s);
  out.generator = splitmix64(s);
  return out;
}

}  // namespace mtlfno

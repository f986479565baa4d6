#pragma once

#include <cstdint>
#include <random>

namespace tapcast {

// Independent consumers of randomness within one run. Each gets its own
// generator so that, e.g., enabling dropout never shifts the initialization.
enum class Stream : std::uint64_t {
  backbone_init = 1,
  head_init = 2,
  dropout = 3,
  shuffle = 4,
  synth = 5,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

inline Rng make_stream(std::uint64_t seed, Stream stream, std::uint64_t salt = 0) {
  const auto s = splitmix64(splitmix64(seed) ^ splitmix64(static_cast<std::uint64_t>(stream) +
                                                           (salt << 8)));
  return Rng(s);
}

}  // namespace tapcast

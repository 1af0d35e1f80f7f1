#pragma once

#include <cstdint>
#include <random>

namespace glkpz {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream for (seed, replica, purpose). Purpose tags keep the
// streams of unrelated consumers of one replica apart.
inline Rng substream(std::uint64_t seed, std::uint64_t replica, std::uint64_t purpose = 0) {
  std::uint64_t s = splitmix64(seed ^ splitmix64(replica + 0x632be59bd9b4e019ULL));
  s = splitmix64(s ^ splitmix64(purpose + 0x8cb92ba72f3d8dd7ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
  return Rng(seq);
}

}  // namespace glkpz

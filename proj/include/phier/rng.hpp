#pragma once

#include <cstdint>
#include <string>

namespace phier::rng {

// splitmix64, used to derive independent sub-seeds from a run seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                            std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t x = splitmix64(seed ^ splitmix64(a));
  x = splitmix64(x ^ splitmix64(b));
  return splitmix64(x ^ splitmix64(c));
}

// FNV-1a 64-bit string hash.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace phier::rng

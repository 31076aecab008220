#pragma once

#include <cstdint>
#include <initializer_list>

namespace s3lg {

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Order-sensitive combination of seed components into one stream seed.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x5333'4C47'0000'0001ULL;
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

}  // namespace s3lg

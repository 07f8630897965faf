#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace npmle {

/// SplitMix64 finalizer. Used to derive independent, reproducible seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  return mix64(seed ^ mix64(value));
}

/// FNV-1a; stable across platforms, unlike std::hash.
constexpr std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

using Engine = std::mt19937_64;

/// Engine for sub-stream `stream` of item `index` under `seed`.
inline Engine make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return Engine(hash_combine(hash_combine(seed, stream), index));
}

}  // namespace npmle

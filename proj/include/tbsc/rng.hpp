#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tbsc {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of stream `stream` under `master`. Streams are addressed by counter
/// (tree index, replicate index, permutation index), so the value drawn by a
/// unit of work never depends on which thread runs it or in what order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return mix64(mix64(master) ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

/// 64-bit FNV-1a, used to key streams by unit name.
constexpr std::uint64_t hash_name(std::string_view name) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline Engine make_engine(std::uint64_t master, std::uint64_t stream) {
  return Engine(derive_seed(master, stream));
}

}  // namespace tbsc

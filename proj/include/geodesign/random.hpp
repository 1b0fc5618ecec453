#pragma once

#include <cstdint>
#include <random>

namespace geodesign {

/// SplitMix64 finalizer. Used to derive independent stream seeds from a
/// master seed and a counter.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `index` under `master`: splitmix64(master + index).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master + index);
}

/// Seed for a named sub-stream (field, design, ...) of a replicate.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t tag) {
  return splitmix64(splitmix64(master + index) ^ splitmix64(tag * 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

}  // namespace geodesign

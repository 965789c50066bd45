#pragma once

#include <cstdint>
#include <string_view>

namespace sidlab {

// splitmix64 finalizer (Vigna). Bijective on uint64, strong avalanche.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

// Collision-resistant seed derivation. For fixed (master_seed, tag) this is a
// bijection of the index, so consecutive replica indices never collide.
// The mixing chain is part of the output format: do not change it.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed,
                                    std::string_view experiment_tag,
                                    std::uint64_t replica_index) {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ fnv1a64(experiment_tag));
  return splitmix64(h ^ replica_index);
}

// Standard normal from one 64-bit word (Box-Muller, cosine branch).
// 32-bit granularity per uniform; plenty for Monte Carlo increments.
double normal_from_u64(std::uint64_t z);

}  // namespace sidlab

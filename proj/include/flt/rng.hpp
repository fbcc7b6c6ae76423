#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace flt {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a tag path, so
// that e.g. client 3 in round 7 gets the same stream no matter which thread
// or in which order it runs.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = mix64(base);
  for (auto t : tags) s = mix64(s ^ mix64(t + 0x632be59bd9b4e019ULL));
  return s;
}

// Stream tags.
namespace seed_tag {
inline constexpr std::uint64_t kModelInit = 1;
inline constexpr std::uint64_t kDataset = 2;
inline constexpr std::uint64_t kLocalBatch = 3;
inline constexpr std::uint64_t kLearningRate = 4;
inline constexpr std::uint64_t kAdapt = 5;
inline constexpr std::uint64_t kCompat = 6;
inline constexpr std::uint64_t kAttack = 7;
inline constexpr std::uint64_t kPoison = 8;
inline constexpr std::uint64_t kKeygen = 9;
inline constexpr std::uint64_t kEncrypt = 10;
}  // namespace seed_tag

}  // namespace flt

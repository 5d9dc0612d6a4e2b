#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedseq {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a tuple of identifiers,
/// e.g. (global seed, client id, round).
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

// Stream tags keep the purpose of each derived stream distinct.
namespace stream {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t data = 2;
inline constexpr std::uint64_t partition = 3;
inline constexpr std::uint64_t minibatch = 4;
inline constexpr std::uint64_t sampling = 5;
inline constexpr std::uint64_t grouping = 6;
inline constexpr std::uint64_t shuffle = 7;
inline constexpr std::uint64_t exemplars = 8;
inline constexpr std::uint64_t pretrain = 9;
}  // namespace stream

}  // namespace fedseq

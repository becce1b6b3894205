#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace echoplane {

/// Deterministic seed for a named sub-stream of a root seed, so that stages
/// (setup, noise, perturbation, ransac, ml-sampling) can be varied in isolation.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                                    std::uint64_t index = 0) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the stream name
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  // splitmix64 finalizer over (root, name hash, index)
  std::uint64_t z = root ^ (h + 0x9e3779b97f4a7c15ULL + (index << 6) + (index >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

}  // namespace echoplane

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cotc {

// Deterministic random stream. Wraps the (standardized) mt19937_64 engine but
// implements its own bounded/real draws: the std distributions are
// implementation-defined, and corrupted datasets must be bit-reproducible
// across platforms and library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, bound). Multiply-shift reduction; the residual bias is
  // O(bound / 2^64) and irrelevant at our bounds.
  std::uint64_t below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return real() < p; }

 private:
  std::mt19937_64 engine_;
};

// 64-bit FNV-1a, used to derive per-record seeds from string ids.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// SplitMix64 finalizer; mixes a root seed with a salt so derived streams are
// decorrelated.
inline std::uint64_t mix_seed(std::uint64_t root, std::uint64_t salt) {
  std::uint64_t z = root + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Seed for one record: root seed combined with the hash of its id. Batch
// corruption parallelizes with deterministic output regardless of scheduling.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view id) {
  return mix_seed(root, fnv1a64(id));
}

}  // namespace cotc

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace capreward {

// mt19937_64 output is fully specified by the standard, unlike the standard
// distributions; everything seeded goes through these helpers so sequences
// match across toolchains.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform index in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
    return i < n ? i : n - 1;
}

// Derives an independent stream seed for `key` from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view key);

}  // namespace capreward

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sitsx {

// splitmix64: stable 64-bit mixer used for seed derivation and hashing.
// Records, epochs and workers get independent, reproducible streams from
// hash-combined seeds instead of sharing one generator.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
    return splitmix64(seed ^ splitmix64(v));
}

// FNV-1a over bytes; used for config fingerprints.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

// Per-record generator: independent of generation order, so records can be
// produced in any order (or in parallel) and still be bit-reproducible.
inline Rng record_rng(std::uint64_t master_seed, std::uint64_t record_index) {
    return Rng(hash_combine(master_seed, record_index));
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline bool bernoulli(Rng& rng, double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform01(rng) < p;
}

// Normal truncated to [-2 sigma, 2 sigma]; the usual transformer init draw.
template <typename Scalar = float>
Scalar trunc_normal(Rng& rng, double sigma) {
    std::normal_distribution<double> dist(0.0, sigma);
    for (;;) {
        double x = dist(rng);
        if (x >= -2.0 * sigma && x <= 2.0 * sigma) return static_cast<Scalar>(x);
    }
}

}  // namespace sitsx

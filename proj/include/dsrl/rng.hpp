#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace dsrl {

using RngStream = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stable child-seed derivation: master seed folded with a role tag and two
// indices. Used everywhere a run needs an independent, reproducible stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t i = 0, std::uint64_t j = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::uint64_t state = master ^ h;
    splitmix64(state);
    state ^= 0x9e3779b97f4a7c15ULL * (i + 1);
    splitmix64(state);
    state ^= 0xc2b2ae3d27d4eb4fULL * (j + 1);
    return splitmix64(state);
}

inline RngStream make_stream(std::uint64_t seed) { return RngStream(seed); }

// Deterministic helpers on top of the raw stream; the standard library
// distributions are implementation-defined, these are not.

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_double(RngStream& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(RngStream& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_double(rng);
}

// Unbiased integer in [0, n) by rejection.
inline std::size_t uniform_index(RngStream& rng, std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t draw;
    do {
        draw = rng();
    } while (draw >= limit);
    return static_cast<std::size_t>(draw % bound);
}

// Standard normal via Box-Muller (cosine branch); consumes two draws.
inline double gaussian(RngStream& rng) {
    double u1 = uniform_double(rng);
    while (u1 <= 0.0) u1 = uniform_double(rng);
    const double u2 = uniform_double(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace dsrl

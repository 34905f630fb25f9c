#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace meshflow {

// splitmix64: used to derive independent per-worker / per-replicate seeds
// from one master seed, so parallel and serial runs see identical streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Seed for the k-th independent substream of `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t k) {
    std::uint64_t s = master;
    std::uint64_t first = splitmix64(s);
    s = first ^ (k * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
    return splitmix64(s);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

/// Uniform integer in [0, n). n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double uniform_real(Rng& rng, double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// In-place Fisher-Yates shuffle; std::shuffle is not guaranteed to be
/// reproducible across standard library implementations.
template <typename T>
void fisher_yates(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(rng, i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace meshflow

#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace compromise {

/// Fixed engine so seeded runs reproduce across standard libraries.
using Rng = std::mt19937_64;

/// Unbiased draw from [0, n). Implemented here because the standard
/// distributions are not specified bit-for-bit across library vendors.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = Rng::max() - (Rng::max() % n);
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
void seeded_shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = uniform_index(rng, i);
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace compromise

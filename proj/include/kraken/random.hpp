#pragma once

#include <cstdint>
#include <random>

namespace kraken {

/// std::mt19937_64's output sequence is fixed by the standard, but the
/// std:: distributions are not; the helpers below keep seeded draws
/// identical across standard libraries.
using Rng = std::mt19937_64;

/// Uniform integer in [0, bound), bound > 0. Rejection sampling avoids
/// modulo bias.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
    const std::uint64_t limit = Rng::max() - (Rng::max() % bound + 1) % bound;
    std::uint64_t draw = rng();
    while (draw > limit) draw = rng();
    return draw % bound;
}

/// Uniform integer in [lo, hi].
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    uniform_below(rng, static_cast<std::uint64_t>(hi - lo) + 1));
}

/// Uniform double in [0, 1) with 53 bits of mantissa.
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace kraken

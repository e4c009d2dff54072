#ifndef MSMAE_RNG_HPP
#define MSMAE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>

namespace msmae {

// Counter-based randomness built on splitmix64 (Steele/Lea/Flood constants).
// Every random decision in the project flows from a 64-bit key derived from
// (seed, tag, indices), so any draw can be reproduced in isolation without
// replaying a global stream. Draw protocols are part of the on-disk
// reproducibility contract:
//   next_u64():  state += 0x9E3779B97F4A7C15; return mix64(state)
//   below(n):    next_u64() % n
//   uniform():   (next_u64() >> 11) * 2^-53            (in [0,1))
//   normal():    Box-Muller from two fresh uniform() draws, no caching

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Stable key derivation for independent streams: (seed, tag, a, b) -> key.
inline std::uint64_t derive_key(std::uint64_t seed, std::string_view tag,
                                std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t x = mix64(seed ^ fnv1a64(tag));
    x = mix64(x ^ (a + 0x9E3779B97F4A7C15ULL));
    x = mix64(x ^ (b + 0xBF58476D1CE4E5B9ULL));
    return x;
}

class Rng {
public:
    explicit Rng(std::uint64_t key) : state_(key) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix64(state_);
    }

    // Uniform integer in [0, n). Modulo bias is negligible for the small n
    // used here and keeps the draw protocol trivially re-implementable.
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

} // namespace msmae

#endif

#pragma once

#include <cstdint>

namespace bokeh {

// splitmix64: tiny deterministic generator with identical output on every
// platform, unlike the std distributions whose mapping is
// implementation-defined. Used wherever "same seed => identical bytes" is
// part of the contract (head init, synthetic scenes, shuffling).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double next_range(double lo, double hi) {
        return lo + (hi - lo) * next_unit();
    }

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        // Rejection-free modulo is fine here; n is tiny compared to 2^64.
        return next_u64() % n;
    }

private:
    std::uint64_t state_;
};

} // namespace bokeh

#pragma once

#include <cmath>
#include <cstdint>

namespace ctvit {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// PCG32 with an explicit stream id, so independent substreams (parameter
// init, per-epoch shuffles, toy-data noise) can all be derived from one
// user-facing seed without correlation. All distributions are implemented
// here rather than with std::<random> facilities to keep bit-level
// reproducibility under our own control.
class Rng {
public:
    Rng(uint64_t seed, uint64_t stream) {
        uint64_t mix = seed;
        const uint64_t seeded = splitmix64(mix);
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seeded;
        next_u32();
    }

    explicit Rng(uint64_t seed) : Rng(seed, 0x5c4f) {}

    uint32_t next_u32() {
        const uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        const uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        const uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    uint64_t next_u64() {
        const uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        return n == 0 ? 0 : next_u64() % n;
    }

    // Box-Muller; keeps the spare value for the next call.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Normal(0, sigma) clipped by rejection to +-2 sigma.
    double trunc_normal(double sigma) {
        for (;;) {
            const double x = normal();
            if (x >= -2.0 && x <= 2.0) return x * sigma;
        }
    }

private:
    uint64_t state_ = 0;
    uint64_t inc_ = 1;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Fixed stream ids; one per independent consumer of randomness.
namespace rng_stream {
inline constexpr uint64_t kParamInit = 1;
inline constexpr uint64_t kToyData = 2;
inline constexpr uint64_t kShuffleBase = 3;  // + stage * 1000 + epoch
inline constexpr uint64_t kTest = 99;
}  // namespace rng_stream

}  // namespace ctvit

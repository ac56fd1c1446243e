#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace softthink {

/// One splitmix64 step. Used for seeding and stream derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Mix an index into a seed, producing an independent child seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t s = seed ^ (0x9E3779B97F4A7C15ull * (index + 1));
    return splitmix64(s);
}

/// Seeded xoshiro256** stream. Self-contained (no <random> engines or
/// distributions) so sequences are bit-identical across platforms and
/// standard libraries. Single-owner: not safe for concurrent use of one
/// instance; distinct instances are independent.
class RngState {
public:
    explicit RngState(std::uint64_t seed) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        seed_ = seed;
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    /// Child stream for (seed, index); decode uses one per step so traces
    /// replay identically even when steps are re-executed in isolation.
    static RngState child(std::uint64_t seed, std::uint64_t index) {
        return RngState(derive_seed(seed, index));
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        auto rotl = [](std::uint64_t x, int k) {
            return (x << k) | (x >> (64 - k));
        };
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform on [0,1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform clamped to [eps, 1-eps], eps = 2^-53. Safe to pass through
    /// log() twice.
    double uniform_open01() {
        constexpr double eps = 0x1.0p-53;
        double u = uniform01();
        if (u < eps) u = eps;
        if (u > 1.0 - eps) u = 1.0 - eps;
        return u;
    }

    /// Standard normal via Box-Muller. No cached spare value, so the draw
    /// count per call is fixed.
    double normal() {
        constexpr double two_pi = 6.283185307179586476925286766559;
        const double u1 = uniform_open01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

private:
    std::array<std::uint64_t, 4> state_{};
    std::uint64_t seed_ = 0;
};

} // namespace softthink

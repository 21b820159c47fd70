#pragma once

#include <cstdint>

namespace hcr {

/// Deterministic pseudo-random generator (splitmix64).
///
/// The state advances by a fixed odd increment and each output is a
/// finalizing hash of the state, so the stream is a pure function of the
/// seed: same seed, bit-identical stream, on every platform.
///
/// Independent sub-streams are derived with fork(tag): the child seed is a
/// hash of (base seed, tag), so streams for weight init, dropout and
/// shuffling never overlap and reordering draws in one stream cannot
/// perturb another.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : base_(seed), state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53 bits of entropy.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    float next_float() { return static_cast<float>(next_double()); }

    float uniform(float lo, float hi) {
        return lo + (hi - lo) * static_cast<float>(next_double());
    }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t next_below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    bool bernoulli(double p) { return next_double() < p; }

    /// Child generator for an independent sub-stream. Derived from the
    /// base seed, not the consumed state, so fork(t) yields the same
    /// stream no matter how many draws were taken from the parent.
    Rng fork(std::uint64_t tag) const {
        std::uint64_t z = base_ ^ (tag * 0xD1B54A32D192ED03ULL + 0x8BB84B93962EACC9ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return Rng(z ^ (z >> 31));
    }

    std::uint64_t seed() const { return base_; }

private:
    std::uint64_t base_;
    std::uint64_t state_;
};

}  // namespace hcr

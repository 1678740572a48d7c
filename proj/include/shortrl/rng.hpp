// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>

namespace shortrl {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Reproducible random stream addressed by (seed, index path). Two streams
/// with different paths are statistically independent, so rollouts can be
/// generated in any order or on any worker and still be bit-identical.
class Stream {
public:
    Stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept
        : state_(splitmix64(seed)) {
        for (auto p : path) state_ = splitmix64(state_ ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    }

    std::uint64_t next_u64() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// Index drawn from unnormalized non-negative weights by inverse CDF.
    std::size_t categorical(std::span<const double> probs) noexcept {
        double total = 0.0;
        for (double p : probs) total += p;
        const double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        // Rounding can leave u == total; fall back to the last positive entry.
        for (std::size_t i = probs.size(); i-- > 0;) {
            if (probs[i] > 0.0) return i;
        }
        return 0;
    }

private:
    std::uint64_t state_;
};

}  // namespace shortrl

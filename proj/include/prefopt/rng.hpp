#pragma once

#include <cmath>
#include <cstdint>

namespace prefopt {

// Algorithm name recorded in run manifests so results can be reproduced.
inline constexpr const char* kRngAlgorithm = "splitmix64";

// SplitMix64 (Steele/Lea/Flood). Deterministic across platforms and
// compilers, which std::uniform_real_distribution is not. Streams are
// derived from (seed, stream) so parallel workers stay reproducible.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static Rng stream(std::uint64_t seed, std::uint64_t stream_index) {
        Rng mix(seed);
        std::uint64_t base = mix.next_u64();
        return Rng(base + stream_index * 0x9E3779B97F4A7C15ULL);
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform on [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1); safe as a log() argument.
    double next_open() {
        double u;
        do {
            u = next_double();
        } while (u <= 0.0);
        return u;
    }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Box-Muller; second value of each pair is cached.
    double next_normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = next_open();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n).
    int next_index(int n) {
        return static_cast<int>(next_double() * static_cast<double>(n));
    }

  private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

} // namespace prefopt

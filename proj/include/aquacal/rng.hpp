#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace aquacal {

// Deterministic RNG. The engine (mt19937_64) has a standard-specified
// sequence; the distributions below are hand-rolled because the std
// distribution adaptors are implementation-defined and would break
// bit-reproducibility of archives across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double next_unit() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Uniform integer in [0, n); n must be > 0.
    std::uint64_t next_below(std::uint64_t n) {
        // Modulo bias is < 2^-50 for the n used here (population sizes etc).
        return engine_() % n;
    }

    bool chance(double p) { return next_unit() < p; }

    // Marsaglia polar method; consumes a variable number of engine draws,
    // which is fine because every consumer is itself seed-deterministic.
    double gaussian(double mean, double sigma) {
        if (cached_) {
            cached_ = false;
            return mean + sigma * cache_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_unit() - 1.0;
            v = 2.0 * next_unit() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        cache_ = v * m;
        cached_ = true;
        return mean + sigma * u * m;
    }

    // Inverse-CDF triangular sample on [lo, hi] with the given mode.
    double triangular(double lo, double mode, double hi) {
        if (hi <= lo) return lo;
        const double u = next_unit();
        const double fc = (mode - lo) / (hi - lo);
        if (u < fc) return lo + std::sqrt(u * (hi - lo) * (mode - lo));
        return hi - std::sqrt((1.0 - u) * (hi - lo) * (hi - mode));
    }

    // Derive an independent stream; used to give phases/sub-runs their own seeds.
    std::uint64_t derive(std::uint64_t salt) {
        std::uint64_t x = engine_() ^ (salt * 0x9e3779b97f4a7c15ull);
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ull;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebull;
        x ^= x >> 31;
        return x;
    }

private:
    std::mt19937_64 engine_;
    double cache_ = 0.0;
    bool cached_ = false;
};

// Stateless seed mixer for deriving per-phase / per-run seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

} // namespace aquacal

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ddpvf {

// One splitmix64 step; scrambles seed material fed to the main engine.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Deterministic, platform-independent random source. A stream is addressed by
// (seed, stream, index) so concurrent consumers (Monte Carlo replicates,
// multistart perturbations) draw from decorrelated substreams regardless of
// scheduling order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : Rng(seed, 0, 0) {}

    Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
        std::uint64_t state = seed;
        std::uint64_t mixed = splitmix64_next(state);
        state ^= stream * 0xD1B54A32D192ED03ULL;
        mixed ^= splitmix64_next(state);
        state ^= index * 0x8CB92BA72F3D8DD7ULL;
        mixed ^= splitmix64_next(state);
        engine_.seed(mixed);
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform draw strictly inside (0, 1): 53-bit grid offset by half a step.
    double uniform() {
        const std::uint64_t bits = engine_() >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller; the paired deviate is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ddpvf

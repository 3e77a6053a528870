#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace apsim {

// Deterministic RNG used everywhere randomness appears. std::mt19937_64 has a
// standard-pinned output sequence, but the std distributions do not, so the
// uniform/gaussian mappings are spelled out here to keep traces byte-identical
// across compilers and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; the cosine branch only, so one draw consumes exactly two
    // engine outputs regardless of the value produced.
    double gaussian(double mean, double sd) {
        const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sd * r * std::cos(2.0 * M_PI * u2);
    }

private:
    std::mt19937_64 engine_;
};

// splitmix64, used to derive per-run seeds from a campaign seed and run index
// so that expanded specs are reproducible in isolation.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace apsim

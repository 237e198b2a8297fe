#pragma once

#include <cstdint>
#include <random>

namespace ctha {

/// Seeded RNG wrapper. Standard distributions (uniform_real_distribution etc.)
/// are implementation-defined, which would make "same seed, same bytes" hold
/// only per standard library; drawing doubles straight from the engine's bits
/// keeps experiment output reproducible everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Uniform integer in [0, bound). Modulo bias is irrelevant at the bounds
    /// used here (small pools in fuzz generators).
    std::uint64_t below(std::uint64_t bound) { return bound == 0 ? 0 : engine_() % bound; }

private:
    std::mt19937_64 engine_;
};

}  // namespace ctha

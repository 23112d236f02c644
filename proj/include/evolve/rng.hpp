#pragma once

#include <cstdint>
#include <random>

namespace evolve {

/// Deterministic random source. mt19937_64 output is fully specified by the
/// standard and the [0,1) mapping avoids std::uniform_real_distribution,
/// whose output is implementation-defined. Identical seeds therefore give
/// bit-identical streams on any platform.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 bits of precision.
    double u01() { return double(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform in [-1, 1].
    double symmetric() { return 2.0 * u01() - 1.0; }

    uint64_t below(uint64_t bound) { return bound ? gen_() % bound : 0; }

    /// splitmix64 step; use to derive independent child seeds.
    static uint64_t derive(uint64_t seed, uint64_t stream) {
        uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace evolve

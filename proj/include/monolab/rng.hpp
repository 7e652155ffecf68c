#pragma once

#include <cstdint>
#include <random>

namespace monolab {

/// Deterministic random doubles: mt19937_64 (bit-exact across platforms
/// per the standard) plus an explicit 53-bit mantissa construction, so
/// seeded runs reproduce byte-identically everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
};

} // namespace monolab

#pragma once

#include "monolab/common.hpp"

#include <cstdint>
#include <vector>

namespace monolab {

/// Number of partitions of L into parts of `kinds` kinds, i.e. the
/// coefficient of q^L in prod_{n>=1} (1-q^n)^{-kinds}. Exact integer
/// arithmetic; throws on uint64 overflow (far beyond any L used here).
inline std::uint64_t partition_count(unsigned L, unsigned kinds) {
    if (kinds == 0) throw domain_error("partition_count: kinds must be positive");
    std::vector<std::uint64_t> p(L + 1, 0);
    p[0] = 1;
    for (unsigned color = 0; color < kinds; ++color) {
        for (unsigned n = 1; n <= L; ++n) {
            for (unsigned s = n; s <= L; ++s) {
                std::uint64_t sum;
                if (__builtin_add_overflow(p[s], p[s - n], &sum))
                    throw domain_error("partition_count: uint64 overflow");
                p[s] = sum;
            }
        }
    }
    return p[L];
}

} // namespace monolab

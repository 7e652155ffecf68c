// Enumerate the discrete moduli set of monodromy-free configurations at
// L = 1 and L = 2 and print the found points next to the 3-colored
// partition count they are expected to match.

#include <monolab/apparent.hpp>
#include <monolab/partitions.hpp>

#include <cstdio>

using namespace monolab;

int main() {
    auto sphere = SphereData::default_frame(0.83, 0.57);
    std::array<double, 3> delta{0.21, -0.13, 0.34};

    EnumerationStrategy strat;
    strat.jobs = 2;

    for (std::size_t L : {1, 2}) {
        auto set = enumerate_moduli(sphere, delta, L, strat);
        std::printf("L = %zu: found %zu (expected p3 = %llu)\n", L, set.points.size(),
                    static_cast<unsigned long long>(partition_count(L, 3)));
        for (auto& pt : set.points) {
            std::printf("  residual %.1e  x:", pt.residual);
            for (auto& ap : pt.op.apparent())
                std::printf(" (%+.5f%+.5fi)", ap.x.real(), ap.x.imag());
            std::printf("\n");
        }
    }
    return 0;
}

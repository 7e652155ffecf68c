// Scan the Wilson loop of a deformed operator over the spectral parameter
// and read off the leading conserved charges from the large-theta
// asymptotics of log W.

#include <monolab/spectral.hpp>

#include <cstdio>

using namespace monolab;

int main() {
    FuchsianOperator op(SphereData::default_frame(0.83, 0.57), {0.21, -0.13, 0.34});
    auto loop = pochhammer_loop(op.sphere(), 0, 1, cplx{0.0});

    std::vector<cplx> grid;
    for (int k = 0; k < 26; ++k) grid.push_back(cplx{2.0 + k / 25.0, 0.0});
    auto scan = wilson_scan_ode(op, grid, loop, cplx{1.0}, {.tol = 1e-11}, 2);
    auto cs = extract_charges(scan.samples, 4);

    std::printf("fit window [%.2f, %.2f], residual %.1e\n", cs.window_lo, cs.window_hi,
                cs.fit_residual);
    std::printf("C   = %+.8f %+.8fi\n", cs.C.real(), cs.C.imag());
    for (std::size_t n = 0; n < cs.q.size(); ++n)
        std::printf("q%zu  = %+.8f %+.8fi\n", 2 * n + 1, cs.q[n].real(), cs.q[n].imag());
    return 0;
}

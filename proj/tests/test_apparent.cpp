#include <doctest.h>

#include <monolab/apparent.hpp>
#include <monolab/partitions.hpp>
#include <monolab/rng.hpp>

#include "oracles.hpp"

using namespace monolab;

namespace {

SphereData generic_sphere() { return SphereData::default_frame(0.83, 0.57); }
const std::array<double, 3> generic_delta{0.21, -0.13, 0.34};

EnumerationStrategy quick_strategy(unsigned jobs = 2) {
    EnumerationStrategy s;
    s.jobs = jobs;
    s.newton.tol = 1e-12;
    return s;
}

} // namespace

TEST_CASE("analytic Jacobian matches finite differences (and is holomorphic)") {
    ApparentSystem sys(generic_sphere(), generic_delta, 2);
    std::vector<cplx> u = {cplx{0.35, 0.21}, cplx{0.4, -0.1},
                           cplx{-0.42, 0.17}, cplx{-0.3, 0.25}};
    auto J = sys.jacobian(u);
    auto Jfd = oracles::fd_jacobian([&](const std::vector<cplx>& v) { return sys.eval(v); }, u);
    double err = 0;
    for (std::size_t k = 0; k < J.size(); ++k) err = std::max(err, std::abs(J[k] - Jfd[k]));
    CHECK(err < 1e-5);

    // Cauchy-Riemann: a purely imaginary perturbation acts as i times the real one
    const double h = 1e-6;
    for (std::size_t j = 0; j < u.size(); ++j) {
        auto ur = u, ui = u;
        ur[j] += h;
        ui[j] += cplx{0.0, h};
        auto fr = sys.eval(ur), fi = sys.eval(ui), f0 = sys.eval(u);
        for (std::size_t i = 0; i < u.size(); ++i) {
            cplx dr = (fr[i] - f0[i]) / h;
            cplx di = (fi[i] - f0[i]) / h;
            CHECK(std::abs(di - cplx{0.0, 1.0} * dr) < 1e-4 * (1.0 + std::abs(dr)));
        }
    }
}

TEST_CASE("residuals are symmetric under permuting the apparent punctures") {
    ApparentSystem sys(generic_sphere(), generic_delta, 2);
    std::vector<cplx> u = {cplx{0.35, 0.21}, cplx{0.4, -0.1},
                           cplx{-0.42, 0.17}, cplx{-0.3, 0.25}};
    std::vector<cplx> swapped = {u[2], u[3], u[0], u[1]};
    auto F = sys.eval(u);
    auto G = sys.eval(swapped);
    CHECK(std::abs(F[0] - G[2]) < 1e-14);
    CHECK(std::abs(F[1] - G[3]) < 1e-14);
    CHECK(std::abs(F[2] - G[0]) < 1e-14);
    CHECK(std::abs(F[3] - G[1]) < 1e-14);
}

TEST_CASE("L=0 is the trivial moduli set") {
    auto set = enumerate_moduli(generic_sphere(), generic_delta, 0, quick_strategy());
    CHECK(set.points.size() == 1);
    CHECK(set.points[0].op.L() == 0);
    auto rep = verify_monodromy_free(set.points[0], {cplx{0.0}, cplx{1.0}});
    CHECK(rep.pass); // vacuously
}

TEST_CASE("L=1 enumeration finds exactly p3(1) = 3 verified points") {
    auto sphere = generic_sphere();
    CHECK(generic_parameters(sphere.exponents(), generic_delta));
    auto set = enumerate_moduli(sphere, generic_delta, 1, quick_strategy());
    REQUIRE(set.points.size() == partition_count(1, 3));
    for (std::size_t i = 0; i < set.points.size(); ++i) {
        CHECK(set.points[i].residual <= 1e-10);
        CHECK(set.oracle_deviation[i] < 1e-6);
    }

    // converged point: both no-log conditions vanish
    auto& pt = set.points[0];
    auto [e0, e2] = nolog_conditions(pt.op, 0);
    CHECK(std::abs(e0) < 1e-10);
    CHECK(std::abs(e2) < 1e-10);
    // lambda^2-part alone pins c = dlogP(x)
    CHECK(std::abs(pt.op.apparent()[0].c - sphere.dlogP(pt.op.apparent()[0].x)) < 1e-10);
}

TEST_CASE("newton behaves at and near a converged point, and guards collisions") {
    auto sphere = generic_sphere();
    ApparentSystem sys(sphere, generic_delta, 1);
    auto set = enumerate_moduli(sphere, generic_delta, 1, quick_strategy());
    REQUIRE(set.points.size() == 3);
    auto& p = set.points[1].op.apparent()[0];
    std::vector<cplx> at = {p.x, p.c};

    auto r0 = solve_newton(sys, at, {.tol = 1e-11});
    CHECK(r0.converged);
    CHECK(r0.iterations <= 2);
    CHECK(r0.residual <= 1e-11);

    std::vector<cplx> nearby = {p.x + cplx{1e-3, -4e-4}, p.c + cplx{-2e-4, 1e-3}};
    auto r1 = solve_newton(sys, nearby, {.tol = 1e-12});
    CHECK(r1.converged);
    CHECK(std::abs(r1.u[0] - p.x) < 1e-8);
    CHECK(std::abs(r1.u[1] - p.c) < 1e-8);

    // nearly coincident punctures: either converges collision-free or fails
    ApparentSystem sys2(sphere, generic_delta, 2);
    std::vector<cplx> bad = {cplx{0.3, 0.1}, sphere.dlogP(cplx{0.3, 0.1}),
                             cplx{0.3 + 1e-5, 0.1}, sphere.dlogP(cplx{0.3 + 1e-5, 0.1})};
    auto r2 = solve_newton(sys2, bad, {.tol = 1e-11, .max_iter = 40});
    if (r2.converged) {
        CHECK(std::abs(r2.u[0] - r2.u[2]) > 1e-3 * sphere.min_separation());
    } else {
        CHECK(!r2.message.empty());
    }
}

TEST_CASE("oracle: converged points pass, perturbed points separate cleanly") {
    auto sphere = generic_sphere();
    auto set = enumerate_moduli(sphere, generic_delta, 1, quick_strategy());
    REQUIRE(set.points.size() == 3);
    const std::vector<cplx> samples = {cplx{0.0}, cplx{1.0}, cplx{-2.0, 3.0}};

    for (auto& pt : set.points) {
        auto rep = verify_monodromy_free(pt, samples, 1e-6);
        CHECK(rep.pass);
        CHECK(rep.sign_consistent);
    }

    // contrapositive: shift c by 0.1 -> visible monodromy at some lambda^2
    auto& good = set.points[0].op;
    FuchsianOperator bad(good.sphere(), good.delta(),
                         {{good.apparent()[0].x, good.apparent()[0].c + 0.1}});
    ModuliPoint badpt{bad, 1.0, 1};
    auto rep = verify_monodromy_free(badpt, samples, 1e-6);
    CHECK(!rep.pass);
    CHECK(rep.max_deviation > 1e-3);

    // random non-solution
    FuchsianOperator rnd(good.sphere(), good.delta(), {{cplx{0.37, 0.41}, cplx{0.2, -0.5}}});
    auto rep2 = verify_monodromy_free(ModuliPoint{rnd, 1.0, 1}, {cplx{0.7, 0.3}}, 1e-6);
    CHECK(rep2.max_deviation > 1e-3);
}

TEST_CASE("L=2 enumeration finds exactly p3(2) = 9 verified points") {
    auto sphere = generic_sphere();
    auto set = enumerate_moduli(sphere, generic_delta, 2, quick_strategy());
    REQUIRE(set.points.size() == partition_count(2, 3));
    for (std::size_t i = 0; i < set.points.size(); ++i) {
        CHECK(set.points[i].residual <= 1e-10);
        CHECK(set.oracle_deviation[i] < 1e-6);
    }
}

TEST_CASE("continuity under a small parameter homotopy step") {
    auto sphere = generic_sphere();
    auto set = enumerate_moduli(sphere, generic_delta, 1, quick_strategy());
    REQUIRE(set.points.size() == 3);
    std::array<double, 3> delta2 = generic_delta;
    delta2[0] += 5e-3;
    ApparentSystem sys2(sphere, delta2, 1);
    std::vector<std::vector<cplx>> moved;
    for (auto& pt : set.points) {
        std::vector<cplx> u = {pt.op.apparent()[0].x, pt.op.apparent()[0].c};
        auto r = solve_newton(sys2, u, {.tol = 1e-12});
        REQUIRE(r.converged);
        CHECK(std::abs(r.u[0] - u[0]) < 0.05); // moved continuously
        moved.push_back(r.u);
    }
    // no two points merged
    for (std::size_t i = 0; i < moved.size(); ++i)
        for (std::size_t j = i + 1; j < moved.size(); ++j)
            CHECK(std::abs(moved[i][0] - moved[j][0]) > 1e-3);
}

TEST_CASE("genericity heuristic flags resonances") {
    CHECK(generic_parameters({0.83, 0.57, 0.6}, {0.21, -0.13, 0.34}));
    CHECK(!generic_parameters({0.83, 0.57, 0.6}, {0.0, -0.13, 0.34}));   // sqrt(1+0) = 1
    CHECK(!generic_parameters({0.83, 0.57, 0.6}, {2.0, -0.13, 0.34}));   // sqrt(9) = 3
    CHECK(!generic_parameters({0.75, 0.57, 0.68}, {0.21, -0.13, 0.34})); // a1 = 3/4
    CHECK(!generic_parameters({2.0 / 3, 0.57, 0.76}, {0.21, -0.13, 0.34})); // a1 = 2/3
}

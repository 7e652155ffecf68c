#include <doctest.h>

#include <monolab/transport.hpp>
#include <monolab/rng.hpp>

#include "oracles.hpp"

using namespace monolab;

namespace {

SphereData frame(double a1 = 0.7, double a2 = 0.6) { return SphereData::default_frame(a1, a2); }

PathSpec straight(cplx p, cplx q) {
    PathSpec path;
    path.base = p;
    path.segments.push_back(LineSeg{p, q});
    return path;
}

} // namespace

TEST_CASE("free equation transports to the shift matrix") {
    FuchsianOperator op(frame(), {0.0, 0.0, 0.0});
    cplx p{0.05, 0.1}, q{0.4, -0.3};
    auto tm = transport(op, cplx{0.0}, straight(p, q), {.tol = 1e-12});
    CHECK(std::abs(tm.m.a - 1.0) < 1e-11);
    CHECK(std::abs(tm.m.b - (q - p)) < 1e-11);
    CHECK(std::abs(tm.m.c) < 1e-11);
    CHECK(std::abs(tm.m.d - 1.0) < 1e-11);
}

TEST_CASE("contractible loop gives the identity") {
    FuchsianOperator op(frame(), {0.3, -0.1, 0.2});
    PathSpec loop;
    loop.base = cplx{0.1, 0.0};
    loop.segments.push_back(LineSeg{cplx{0.1, 0.0}, cplx{0.45, 0.1}});
    loop.segments.push_back(ArcSeg{cplx{0.25, 0.05}, std::abs(cplx{0.45, 0.1} - cplx{0.25, 0.05}),
                                   std::arg(cplx{0.45, 0.1} - cplx{0.25, 0.05}), two_pi});
    loop.segments.push_back(LineSeg{cplx{0.45, 0.1}, cplx{0.1, 0.0}});
    loop.loop = true;
    auto tm = transport(op, cplx{0.6, 0.2}, loop, {.tol = 1e-11});
    CHECK(dist_inf(tm.m, Mat2::identity()) < 1e-9);
}

TEST_CASE("monodromy trace around z1 matches the Frobenius exponents") {
    // exponents (1 +- sqrt(1+4 delta))/2 give eigenvalues exp(2 pi i s),
    // hence trace = -2 cos(pi sqrt(1+4 delta))
    for (double d1 : {0.37, 1.21, -0.15}) {
        FuchsianOperator op(frame(), {d1, 0.0, 0.0});
        double radius = 0.1 * op.sphere().min_separation();
        cplx base = op.sphere().puncture(0) + 2.5 * radius;
        auto tm = monodromy_around(op, cplx{0.0}, op.sphere().puncture(0), radius, base,
                                   {.tol = 1e-12});
        cplx expected = -2.0 * std::cos(pi * std::sqrt(cplx{1.0 + 4.0 * d1}));
        CHECK(std::abs(tm.m.trace() - expected) < 1e-8);
    }
}

TEST_CASE("loop around a puncture with no actual pole is trivial") {
    FuchsianOperator op(frame(), {0.0, 0.0, 0.0});
    double radius = 0.15;
    cplx base = op.sphere().puncture(0) + 2.5 * radius;
    auto tm = monodromy_around(op, cplx{0.0}, op.sphere().puncture(0), radius, base, {.tol = 1e-11});
    CHECK(dist_inf(tm.m, Mat2::identity()) < 1e-9);
}

TEST_CASE("double traversal squares the monodromy") {
    // around a primary puncture the weight is single-valued only at
    // lambda^2 = 0; the deformed check uses the zero-winding commutator loop
    FuchsianOperator op(frame(), {0.45, 0.2, 0.0});
    double radius = 0.16;
    cplx base = op.sphere().puncture(1) + 2.3 * radius;
    auto loop = simple_loop(base, op.sphere().puncture(1), radius);
    auto m1 = transport(op, cplx{0.0}, loop, {.tol = 1e-11}).m;
    auto m2 = transport(op, cplx{0.0}, loop.then(loop), {.tol = 1e-11}).m;
    CHECK(dist_inf(m2, m1 * m1) < 1e-8);

    auto poch = pochhammer_loop(op.sphere(), 0, 1, cplx{0.0});
    auto p1 = transport(op, cplx{0.3, -0.4}, poch, {.tol = 1e-12}).m;
    auto p2 = transport(op, cplx{0.3, -0.4}, poch.then(poch), {.tol = 1e-12}).m;
    CHECK(dist_inf(p2, p1 * p1) < 1e-8 * (1.0 + sqr(p1.norm_inf())));
}

TEST_CASE("monodromy disk must isolate exactly one singular location") {
    FuchsianOperator op(frame(), {0.45, 0.2, 0.0});
    // disk around the midpoint of z1, z2 large enough to contain both
    cplx mid = 0.5 * (op.sphere().puncture(0) + op.sphere().puncture(1));
    CHECK_THROWS_AS(monodromy_around(op, cplx{0.0}, mid, 1.0, mid + cplx{1.4, 0.9}, {}),
                    config_error);
    CHECK_THROWS_AS(monodromy_around(op, cplx{0.0}, mid, 0.05, mid + cplx{0.2}, {}), config_error);
}

TEST_CASE("det = 1, reversal = inverse, concatenation = product") {
    Rng rng(99);
    auto s = frame(0.9, 0.35);
    for (int trial = 0; trial < 6; ++trial) {
        FuchsianOperator op(s, {rng.uniform(-0.3, 1.2), rng.uniform(-0.3, 1.2), rng.uniform(-0.3, 1.2)});
        cplx l2{rng.uniform(-2, 2), rng.uniform(-2, 2)};
        cplx p{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
        cplx q{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
        cplx r{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
        if (std::abs(p - q) < 0.1 || std::abs(q - r) < 0.1) continue;
        const double tol = 1e-10;
        auto t1 = transport(op, l2, straight(p, q), {.tol = tol});
        CHECK(t1.det_defect() < 10 * tol * (1 + sqr(t1.m.norm_inf())));
        // reversal and concatenation continue the branch reached by the
        // forward transport (the weight is multivalued)
        auto t1r = transport(op, l2, straight(p, q).reversed(), {.tol = tol},
                             &*t1.branch_end);
        CHECK(dist_inf(t1r.m, t1.m.inverse()) < 1e-8);
        auto t2 = transport(op, l2, straight(q, r), {.tol = tol}, &*t1.branch_end);
        auto t12 = transport(op, l2, straight(p, q).then(straight(q, r)), {.tol = tol});
        CHECK(dist_inf(t12.m, t2.m * t1.m) < 1e-8);
    }
}

TEST_CASE("halving the tolerance reduces the determinant defect") {
    // truncation-dominated regime: moderate matrix norms, loose tolerances
    FuchsianOperator op(frame(), {0.52, 0.31, -0.12});
    double radius = 0.1 * op.sphere().min_separation();
    cplx base = op.sphere().puncture(0) + 2.5 * radius;
    auto loop = simple_loop(base, op.sphere().puncture(0), radius);
    double d_loose = transport(op, cplx{0.4, 0.2}, loop, {.tol = 1e-4}).det_defect();
    double d_mid = transport(op, cplx{0.4, 0.2}, loop, {.tol = 1e-6}).det_defect();
    double d_tight = transport(op, cplx{0.4, 0.2}, loop, {.tol = 1e-8}).det_defect();
    CHECK(d_tight < d_loose);
    CHECK(d_mid < 10 * d_loose);
    CHECK(d_tight < 10 * d_mid);
    CHECK(d_loose > 1e-12); // nontrivial at the loose end
}

TEST_CASE("pochhammer loop: zero winding, branch restored, commutator factorization") {
    auto s = frame(0.8, 0.45);
    auto loop = pochhammer_loop(s, 0, 1, cplx{0.0});
    CHECK(std::abs(loop.winding_number(s.puncture(0))) < 1e-6);
    CHECK(std::abs(loop.winding_number(s.puncture(1))) < 1e-6);
    CHECK(std::abs(loop.winding_number(s.puncture(2))) < 1e-6);

    // transporting the branch of P along the loop returns it to the start
    BranchState b(s, loop.base);
    for (auto& seg : loop.segments) {
        int n = std::max(16, static_cast<int>(seg_length(seg) / 0.02));
        for (int k = 1; k <= n; ++k)
            b = b.continue_to(s, seg_point(seg, static_cast<double>(k) / n));
    }
    CHECK(b.max_offset_abs(BranchState(s, loop.base)) < 1e-9);

    // W equals the commutator of individually measured monodromies, and the
    // SL2 trace-word identity in (Tr M1, Tr M2, Tr M1 M2)
    FuchsianOperator op(s, {0.3, 0.45, 0.1});
    const double tol = 1e-12;
    double radius = 0.1 * s.min_separation();
    auto m1 = transport(op, cplx{0.0}, simple_loop(cplx{0.0}, s.puncture(0), radius), {.tol = tol}).m;
    auto m2 = transport(op, cplx{0.0}, simple_loop(cplx{0.0}, s.puncture(1), radius), {.tol = tol}).m;
    cplx w_direct = wilson_trace(op, cplx{0.0}, loop, {.tol = tol});
    cplx w_product = (m1 * m2 * m1.inverse() * m2.inverse()).trace();
    cplx w_word = oracles::commutator_trace_from_traces(m1.trace(), m2.trace(), (m1 * m2).trace());
    CHECK(std::abs(w_direct - w_product) < 1e-8 * (1.0 + std::abs(w_product)));
    CHECK(std::abs(w_direct - w_word) < 1e-8 * (1.0 + std::abs(w_word)));
}

TEST_CASE("wilson trace is invariant under base and shape changes") {
    auto s = frame(0.8, 0.45);
    FuchsianOperator op(s, {0.3, 0.45, 0.1});
    cplx l2{1.3, 0.4};
    const double tol = 1e-11;
    cplx w1 = wilson_trace(op, l2, pochhammer_loop(s, 0, 1, cplx{0.0}), {.tol = tol});
    cplx w2 = wilson_trace(op, l2, pochhammer_loop(s, 0, 1, cplx{0.12, -0.2}, 0.13), {.tol = tol});
    CHECK(rel_diff(w1, w2) < 1e-6);
    // a different puncture pair still gives a shape-independent W
    cplx w3 = wilson_trace(op, l2, pochhammer_loop(s, 1, 2, cplx{0.0}), {.tol = tol});
    cplx w4 = wilson_trace(op, l2, pochhammer_loop(s, 1, 2, cplx{-0.1, 0.06}, 0.2), {.tol = tol});
    CHECK(rel_diff(w3, w4) < 1e-6);
}

TEST_CASE("path serialization round-trips") {
    auto s = frame();
    auto loop = pochhammer_loop(s, 0, 2, cplx{0.05, -0.1});
    auto loop2 = path_from_json(to_json(loop));
    REQUIRE(loop2.segments.size() == loop.segments.size());
    CHECK(loop2.loop);
    for (double t : {0.0, 0.3, 0.77})
        for (std::size_t k = 0; k < loop.segments.size(); ++k)
            CHECK(std::abs(seg_point(loop2.segments[k], t) - seg_point(loop.segments[k], t)) == 0.0);
    CHECK(std::abs(loop2.winding_number(s.puncture(0))) < 1e-6);
}

TEST_CASE("paths that clip a puncture are rejected") {
    auto s = frame();
    FuchsianOperator op(s, {0.3, 0.45, 0.1});
    CHECK_THROWS_AS(transport(op, cplx{0.0}, straight(cplx{0.0}, s.puncture(0)), {}),
                    config_error);
    CHECK_THROWS_AS(pochhammer_loop(s, 0, 0, cplx{0.0}), config_error);
    CHECK_THROWS_AS(pochhammer_loop(s, 0, 1, s.puncture(0) + cplx{0.01, 0.0}), config_error);
}

TEST_CASE("an initial branch state away from the path base is rejected") {
    auto s = frame();
    FuchsianOperator op(s, {0.3, 0.45, 0.1});
    BranchState elsewhere(s, cplx{0.4, 0.4});
    CHECK_THROWS_AS(transport(op, cplx{0.5}, straight(cplx{0.0}, cplx{0.2, 0.1}), {}, &elsewhere),
                    branch_error);
}

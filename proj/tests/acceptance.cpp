// Acceptance suite: runs every acceptance criterion at its pinned
// tolerance and prints one PASS/FAIL line per criterion. Exit code 0 iff
// all gating criteria pass (criterion 8 reports WARN without gating, and
// the L = 3 stretch count is informational).

#include <monolab/runner.hpp>

#include <cstdio>
#include <filesystem>

using namespace monolab;

namespace {

int failures = 0;

void line(int num, const char* name, bool pass, const std::string& detail, bool gating = true) {
    std::printf("criterion %2d %-34s %s   %s\n", num, name,
                pass ? "PASS" : (gating ? "FAIL" : "WARN"), detail.c_str());
    if (!pass && gating) ++failures;
    std::fflush(stdout);
}

void info(const std::string& text) { std::printf("             %s\n", text.c_str()); }

struct Draw {
    SphereData sphere;
    std::array<double, 3> delta;
};

Draw generic_draw(Rng& rng) {
    for (int t = 0; t < 500; ++t) {
        double a1 = rng.uniform(0.35, 0.95), a2 = rng.uniform(0.35, 0.95);
        double a3 = 2.0 - a1 - a2;
        if (a3 <= 0.15 || a3 >= 1.85) continue;
        std::array<double, 3> delta{};
        for (auto& d : delta) d = rng.uniform(-0.22, 0.6);
        if (!generic_parameters({a1, a2, a3}, delta)) continue;
        return {SphereData::default_frame(a1, a2), delta};
    }
    throw error("generic draw failed");
}

EnumerationStrategy strategy(std::uint64_t seed) {
    EnumerationStrategy st;
    st.seed = seed;
    st.jobs = 2;
    st.newton.tol = 1e-12;
    st.oracle_lambda2 = {cplx{0.0}, cplx{1.0}, cplx{-2.0, 3.0}};
    st.oracle_tol = 1e-6;
    return st;
}

std::vector<cplx> real_grid(double lo, double hi, int n) {
    std::vector<cplx> g;
    for (int k = 0; k < n; ++k) g.push_back(cplx{lo + (hi - lo) * k / (n - 1.0), 0.0});
    return g;
}

} // namespace

int main() {
    std::printf("acceptance suite (tolerances pinned in source)\n");
    std::printf("----------------------------------------------\n");
    Rng master(918273645ull);

    // ---- criteria 1 and 2: counting and oracle equivalence ----------------
    std::vector<ModuliPoint> all_points;
    std::vector<Draw> draws;
    {
        bool count_ok = true;
        double worst_resid = 0, worst_dev = 0;
        std::string detail;
        for (int d = 0; d < 3; ++d) {
            Draw dr = generic_draw(master);
            draws.push_back(dr);
            auto s1 = enumerate_moduli(dr.sphere, dr.delta, 1, strategy(1000 + d));
            auto s2 = enumerate_moduli(dr.sphere, dr.delta, 2, strategy(2000 + d));
            count_ok = count_ok && s1.points.size() == 3 && s2.points.size() == 9;
            for (auto* set : {&s1, &s2}) {
                for (std::size_t i = 0; i < set->points.size(); ++i) {
                    worst_resid = std::max(worst_resid, set->points[i].residual);
                    worst_dev = std::max(worst_dev, set->oracle_deviation[i]);
                    all_points.push_back(set->points[i]);
                }
            }
            detail += (d ? ", " : "") + std::to_string(s1.points.size()) + "/" +
                      std::to_string(s2.points.size());
        }
        char buf[240];
        std::snprintf(buf, sizeof buf,
                      "L1/L2 counts per draw: %s (want 3/9); residual <= 1e-10 (worst %.1e), "
                      "oracle dev <= 1e-6 (worst %.1e)",
                      detail.c_str(), worst_resid, worst_dev);
        line(1, "moduli counting p3(1), p3(2)",
             count_ok && worst_resid <= 1e-10 && worst_dev <= 1e-6, buf);

        // L = 3 stretch goal, reported but not gating
        EnumerationStrategy st3 = strategy(3000);
        st3.max_solves = 40000;
        st3.random_tuples = 20000;
        st3.auto_homotopy_rounds = 5;
        auto s3 = enumerate_moduli(draws[0].sphere, draws[0].delta, 3, st3);
        std::snprintf(buf, sizeof buf, "L=3 stretch: found %zu of 22 verified points",
                      s3.points.size());
        line(1, "  stretch: p3(3) = 22", s3.points.size() == 22, buf, /*gating=*/false);
    }

    {
        // oracle equivalence on the converged points plus perturbed
        // non-solutions, classified at (1e-10, 1e-6) vs 1e-3
        const std::vector<cplx> samples = {cplx{0.0}, cplx{1.0}, cplx{-2.0, 3.0}};
        int disagreements = 0, n_conv = 0, n_pert = 0;
        Rng prng(555);
        for (auto& pt : all_points) {
            bool algebraic = pt.residual <= 1e-10;
            auto rep = verify_monodromy_free(pt, samples, 1e-6);
            if (algebraic != rep.pass) ++disagreements;
            ++n_conv;

            // perturb into a non-solution
            auto ap = pt.op.apparent();
            for (auto& p : ap) {
                p.x += cplx{prng.uniform(0.04, 0.1), prng.uniform(0.02, 0.08)};
                p.c += cplx{prng.uniform(0.04, 0.1), -prng.uniform(0.02, 0.08)};
            }
            try {
                FuchsianOperator bad(pt.op.sphere(), pt.op.delta(), ap);
                ApparentSystem sys(pt.op.sphere(), pt.op.delta(), pt.op.L());
                std::vector<cplx> u;
                for (auto& p : ap) {
                    u.push_back(p.x);
                    u.push_back(p.c);
                }
                std::vector<double> S;
                auto F = sys.eval_with_scale(u, S);
                double resid = 0;
                for (std::size_t i = 0; i < F.size(); ++i)
                    resid = std::max(resid, std::abs(F[i]) / S[i]);
                auto rep2 = verify_monodromy_free({bad, resid, pt.op.L(), resid}, samples, 1e-6);
                bool alg_bad = resid > 1e-10;
                bool mono_bad = rep2.max_deviation > 1e-3;
                if (!(alg_bad && mono_bad)) ++disagreements;
                ++n_pert;
            } catch (const error&) {
                // collided perturbation; skip
            }
        }
        char buf[160];
        std::snprintf(buf, sizeof buf, "%d converged + %d perturbed points, %d disagreements",
                      n_conv, n_pert, disagreements);
        line(2, "no-log <-> monodromy oracle", n_conv >= 20 && n_pert >= 20 && disagreements == 0,
             buf);
    }

    // ---- criterion 3: analytic monodromy trace ----------------------------
    {
        double worst = 0;
        int done = 0;
        Rng rng(777);
        while (done < 10) {
            double d1 = rng.uniform(-0.2, 2.0);
            double disc = std::sqrt(1.0 + 4.0 * d1);
            if (std::abs(disc - std::round(disc)) < 1e-3) continue;
            FuchsianOperator op(SphereData::default_frame(0.7, 0.6), {d1, 0.0, 0.0});
            double radius = 0.1 * op.sphere().min_separation();
            auto tm = monodromy_around(op, cplx{0.0}, op.sphere().puncture(0), radius,
                                       op.sphere().puncture(0) + 2.5 * radius, {.tol = 1e-12});
            cplx expected = -2.0 * std::cos(pi * std::sqrt(cplx{1.0 + 4.0 * d1}));
            worst = std::max(worst, std::abs(tm.m.trace() - expected));
            ++done;
        }
        char buf[120];
        std::snprintf(buf, sizeof buf, "10 draws of delta1 in (-0.2, 2); worst |Tr - formula| = %.2e",
                      worst);
        line(3, "analytic monodromy trace", worst < 1e-8, buf);
    }

    // ---- criterion 4: Wilson invariance and periodicity (ODE) -------------
    const auto set1 = enumerate_moduli(draws[0].sphere, draws[0].delta, 1, strategy(1000));
    {
        // operator with a verified monodromy-free puncture
        const ModuliPoint* pick = &set1.points[0];
        for (auto& p : set1.points)
            if (p.op.dist_to_poles(cplx{0.0}) > pick->op.dist_to_poles(cplx{0.0})) pick = &p;
        const FuchsianOperator& op = pick->op;
        const SphereData& s = op.sphere();
        cplx xa = op.apparent()[0].x;
        const TransportOptions topts{.tol = 1e-11};
        cplx l2 = std::exp(cplx{1.6, 0.4});

        cplx w_base1 = wilson_trace(op, l2, pochhammer_loop(s, 0, 1, cplx{0.0}), topts);
        cplx w_base2 = wilson_trace(op, l2, pochhammer_loop(s, 0, 1, cplx{0.12, -0.2}), topts);
        double dev_base = rel_diff(w_base1, w_base2);
        cplx w_rad = wilson_trace(op, l2, pochhammer_loop(s, 0, 1, cplx{0.0}, 0.13), topts);
        double dev_rad = rel_diff(w_base1, w_rad);

        double dev_sweep = 1e300;
        if (std::abs(xa) < 1.6) {
            cplx n{-xa.imag(), xa.real()};
            n /= std::abs(n);
            double d = 0.12;
            try {
                cplx wp = wilson_trace(op, l2, pochhammer_loop_via(s, 0, 1, cplx{0.0}, 0.17, xa + d * n),
                                       topts);
                cplx wm = wilson_trace(op, l2, pochhammer_loop_via(s, 0, 1, cplx{0.0}, 0.17, xa - d * n),
                                       topts);
                dev_sweep = rel_diff(wp, wm);
            } catch (const error&) {
            }
        }
        if (dev_sweep == 1e300) {
            // routing around this x_a clipped a pole; compose with the
            // monodromy-free loop instead (the same homotopy statement)
            auto loop = pochhammer_loop(s, 0, 1, cplx{0.0});
            cplx w0 = wilson_trace(op, l2, loop, topts);
            double clear = op.dist_to_poles(xa) * 0.35;
            auto xloop = simple_loop(loop.base, xa, std::min(0.15, clear));
            cplx w1 = wilson_trace(op, l2, loop.then(xloop), topts);
            dev_sweep = rel_diff(w0, w1);
        }

        double worst_per = 0;
        const TransportOptions ptight{.tol = 1e-12};
        auto perloop = pochhammer_loop(s, 0, 1, cplx{0.0});
        for (auto th : real_grid(0.2, 1.8, 20)) {
            cplx w0 = wilson_trace(op, std::exp(2.0 * th), perloop, ptight);
            cplx w1 = wilson_trace(op, std::exp(2.0 * (th + cplx{0.0, pi})), perloop, ptight);
            worst_per = std::max(worst_per, std::abs(w1 - w0) / (1.0 + std::abs(w0)));
        }
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "base %.1e, shape %.1e, sweep-x_a %.1e (< 1e-6); periodicity %.1e (< 1e-8)",
                      dev_base, dev_rad, dev_sweep, worst_per);
        line(4, "Wilson invariance + periodicity",
             dev_base < 1e-6 && dev_rad < 1e-6 && dev_sweep < 1e-6 && worst_per < 1e-8, buf);
    }

    // ---- criterion 5: charge-extraction stability --------------------------
    {
        const cplx C{1.37, 0.21}, q1{-0.52, 0.83}, q3{0.11, -0.07};
        std::vector<ScanSample> synth;
        for (int k = 0; k < 30; ++k) {
            double th = 2.0 + k / 29.0;
            synth.push_back({cplx{th, 0.0},
                             std::exp(C * std::exp(th) + q1 * std::exp(-th) + q3 * std::exp(-3 * th)),
                             0.0});
        }
        auto cs_syn = extract_charges(synth, 2);
        double syn_dev = std::max({std::abs(cs_syn.C - C), std::abs(cs_syn.q[0] - q1),
                                   std::abs(cs_syn.q[1] - q3)});

        FuchsianOperator op(SphereData::default_frame(0.83, 0.57), {0.21, -0.13, 0.34});
        auto loop = pochhammer_loop(op.sphere(), 0, 1, cplx{0.0});
        auto sA = wilson_scan_ode(op, real_grid(2.0, 2.5, 26), loop, cplx{1.0}, {.tol = 1e-11}, 2);
        auto sB = wilson_scan_ode(op, real_grid(2.5, 3.0, 26), loop, cplx{1.0}, {.tol = 1e-11}, 2);
        auto csA = extract_charges(sA.samples, 4);
        auto csB = extract_charges(sB.samples, 4);
        double window_dev = std::abs(csA.q[0] - csB.q[0]) / std::abs(csA.q[0]);
        char buf[160];
        std::snprintf(buf, sizeof buf, "synthetic recovery %.1e (< 1e-8); window shift %.2e (< 1e-4)",
                      syn_dev, window_dev);
        line(5, "charge-extraction stability", syn_dev < 1e-8 && window_dev < 1e-4, buf);
    }

    // ---- criterion 6: PDE solver order and boundary exponents --------------
    {
        auto sym = SphereData::default_frame(2.0 / 3, 2.0 / 3);
        std::vector<double> msym = {-0.4, -0.4, -0.4};
        MeshSpec m48, m96x, m192;
        m48.n = 48;
        m96x.n = 96;
        m192.n = 192;
        double r48 = residual_on_finer(solve_vacuum(sym, msym, 1.0, m48));
        double r96 = residual_on_finer(solve_vacuum(sym, msym, 1.0, m96x));
        double r192 = residual_on_finer(solve_vacuum(sym, msym, 1.0, m192));
        double ord1 = std::log2(r48 / r96), ord2 = std::log2(r96 / r192);
        auto [cdev, cresid] = solve_constant_patch(0.7, 1.3, 48);

        MeshSpec m96;
        m96.n = 96;
        auto fsym = solve_vacuum(sym, msym, 1.0, m96);
        double worst_sym = 0;
        for (auto& bf : boundary_profile_check(fsym)) worst_sym = std::max(worst_sym, bf.deviation);
        auto uni = SphereData::default_frame(1.3, 1.2, Regime::unitary);
        auto funi = solve_vacuum(uni, {-0.35, -0.3}, 0.9, m96);
        double worst_uni = 0, z3fit = 0, z3tgt = 0;
        for (auto& bf : boundary_profile_check(funi)) {
            worst_uni = std::max(worst_uni, bf.deviation);
            if (bf.location == "z3") {
                z3fit = bf.fitted_exponent;
                z3tgt = bf.target_exponent;
            }
        }
        char buf[240];
        std::snprintf(buf, sizeof buf,
                      "orders %.2f, %.2f (gate 1.9, asymptotic 2); constant patch %.1e; "
                      "exponent devs: sym %.1e, unitary %.1e (< 5e-3)",
                      ord1, ord2, cdev, worst_sym, worst_uni);
        bool ok = ord1 >= 1.9 && ord2 >= 1.9 && cdev < 1e-9 && cresid < 1e-10 &&
                  worst_sym < 5e-3 && worst_uni < 5e-3;
        line(6, "PDE order + boundary exponents", ok, buf);
        std::snprintf(buf, sizeof buf,
                      "unitary z3: fitted e^{-eta} exponent %.6f vs the |P|^{-1/2} law %.6f "
                      "(= |a3/2 - 1|; the displayed a3/2 - 1 is its e^{+eta} counterpart)",
                      z3fit, z3tgt);
        info(buf);
    }

    // ---- criteria 7 and 8: massive side -------------------------------------
    {
        auto s = SphereData::default_frame(0.83, 0.57);
        std::vector<double> m = {-0.40, -0.38, -0.42};

        // flatness at two resolutions
        auto probe = [&](int n) {
            MeshSpec spec;
            spec.n = n;
            auto f = solve_vacuum(s, m, 0.7, spec);
            auto conn = build_connection(f, SpectralPoint::from_theta(0.7, cplx{0.3, 0.2}));
            double worst = 0;
            for (int k = 0; k < 12; ++k) {
                cplx z = 0.45 * std::exp(cplx{0.0, two_pi * k / 12.0}) + cplx{0.1, 0.05};
                worst = std::max(worst, flatness_defect(conn, z, 0.5 * 3.8 / n));
            }
            return worst;
        };
        double f48 = probe(48), f96 = probe(96);
        double ford = std::log2(f48 / f96);

        MeshSpec m96;
        m96.n = 96;
        auto field = solve_vacuum(s, m, 0.7, m96);
        TransportOptions topts{.tol = 1e-10};
        auto spt = SpectralPoint::from_theta(0.7, cplx{0.8, 0.3});
        auto loopA = pochhammer_loop(s, 0, 1, cplx{0.0}, 0.36);
        auto loopB = pochhammer_loop(s, 0, 1, cplx{0.1, -0.07}, 0.42);
        cplx wA = pde_wilson(field, spt, loopA, topts);
        cplx wB = pde_wilson(field, spt, loopB, topts);
        double dev_shape = std::abs(wA - wB) / (1.0 + std::abs(wA));
        cplx wPi = pde_wilson(field, SpectralPoint::from_theta(0.7, cplx{0.8, 0.3 + pi}), loopA, topts);
        double dev_per = std::abs(wPi - wA) / (1.0 + std::abs(wA));

        // rho chain for criterion 8 (also provides the det check at rho = 0.1)
        MeshSpec m128;
        m128.n = 128;
        MShGField chain = solve_vacuum(s, m, 0.8, m128);
        double det_defect = 1e300;
        for (double r : {0.4, 0.2, 0.1, 0.05}) {
            chain = solve_vacuum(s, m, r, m128, {}, &chain);
            if (r == 0.1) {
                auto tm = pde_transport(build_connection(chain, SpectralPoint::from_theta(0.1, cplx{0.0})),
                                        loopA, topts);
                det_defect = tm.det_defect();
            }
        }
        char buf[240];
        std::snprintf(buf, sizeof buf,
                      "flatness order %.2f (48->96, gate 1.5); shape %.2e, periodicity %.2e (< 1e-4); "
                      "det defect %.1e (< 1e-6)",
                      ford, dev_shape, dev_per, det_defect);
        line(7, "zero-curvature + PDE Wilson", ford >= 1.5 && dev_shape < 1e-4 && dev_per < 1e-4 &&
                                                   det_defect < 1e-6, buf);

        // criterion 8: CFT-limit cross-check at rho = 0.05 with the
        // candidate mapping delta_i = m_i (m_i + 1) (a configured
        // convention; treated as reported evidence, not a gate)
        auto pgrid = real_grid(2.5, 3.75, 16);
        auto pscan = wilson_scan_pde(chain, 0.05, pgrid, loopA, {.tol = 1e-10}, 2);
        auto pcs = extract_charges(pscan.samples, 3);
        std::array<double, 3> delta{};
        for (int i = 0; i < 3; ++i) delta[i] = m[i] * (m[i] + 1.0);
        FuchsianOperator op(s, delta);
        auto oscan = wilson_scan_ode(op, real_grid(2.0, 3.0, 24),
                                     pochhammer_loop(s, 0, 1, cplx{0.0}, 0.36), cplx{1.0},
                                     {.tol = 1e-11}, 2);
        auto ocs = extract_charges(oscan.samples, 4);
        double relpct = 100.0 * std::abs(0.05 * pcs.q[0] - ocs.q[0]) / std::abs(ocs.q[0]);
        std::snprintf(buf, sizeof buf,
                      "rho*q1_PDE = %.6f vs q1_ODE = %.6f with delta_i = m_i(m_i+1): %.2f%% (< 5%%)",
                      (0.05 * pcs.q[0]).real(), ocs.q[0].real(), relpct);
        line(8, "CFT-limit cross-check (rho=0.05)", relpct < 5.0, buf, /*gating=*/false);
        std::snprintf(buf, sizeof buf, "leading coefficients: C_PDE = %.6f vs rho*C_ODE = %.6f",
                      pcs.C.real(), (0.05 * ocs.C).real());
        info(buf);
    }

    // ---- criterion 9: dictionary ------------------------------------------
    {
        bool ok = true;
        auto r1 = dictionary({2.0 / 3, 2.0 / 3, 2.0 / 3}, {-0.5, -0.5, -0.5}, 1.0);
        for (int i = 0; i < 3; ++i)
            ok = ok && std::abs(r1.alpha2[i] - 1.0 / 6) < 1e-15 && std::abs(r1.k[i]) < 1e-15;
        ok = ok && std::abs(r1.muR - 2.0) < 1e-15;
        auto r2 = dictionary({0.8, 0.7, 0.5}, {-0.4, -0.45, -0.5}, 0.3);
        ok = ok && std::abs(r2.alpha2[0] - 0.2) < 1e-15 && std::abs(r2.alpha2[1] - 0.175) < 1e-15 &&
             std::abs(r2.alpha2[2] - 0.125) < 1e-15;
        ok = ok && std::abs(r2.k[0] - 0.25) < 1e-14 && std::abs(r2.k[1] - 1.0 / 7) < 1e-14 &&
             std::abs(r2.k[2]) < 1e-14 && std::abs(r2.muR - 0.6) < 1e-15;
        double sumdev = std::abs(r2.alpha2[0] + r2.alpha2[1] + r2.alpha2[2] - 0.5);
        bool rejected = false;
        try {
            dictionary({0.8, 0.7, 0.5}, {-0.2, -0.45, -0.5}, 0.3);
        } catch (const domain_error&) {
            rejected = true;
        }
        char buf[160];
        std::snprintf(buf, sizeof buf, "worked examples exact; sum alpha^2 dev %.1e (< 1e-14); "
                      "out-of-domain m rejected: %s", sumdev, rejected ? "yes" : "NO");
        line(9, "dictionary + domain guards", ok && sumdev < 1e-14 && rejected, buf);
    }

    // ---- criterion 10: determinism ------------------------------------------
    {
        auto digest = [](const RunRecord& rec, const std::string& suffix) {
            for (auto& o : rec.outputs)
                if (o.path.size() >= suffix.size() &&
                    o.path.compare(o.path.size() - suffix.size(), suffix.size(), suffix) == 0)
                    return o.sha256;
            return std::string();
        };
        nlohmann::json enum_cfg = {
            {"task", "enumerate"},
            {"seed", 13579},
            {"jobs", 2},
            {"sphere", {{"a", {draws[0].sphere.exponent(0), draws[0].sphere.exponent(1)}}}},
            {"delta", {draws[0].delta[0], draws[0].delta[1], draws[0].delta[2]}},
            {"L", 1},
        };
        nlohmann::json wil_cfg = {
            {"task", "wilson"},
            {"seed", 13579},
            {"jobs", 2},
            {"sphere", {{"a", {draws[0].sphere.exponent(0), draws[0].sphere.exponent(1)}}}},
            {"delta", {draws[0].delta[0], draws[0].delta[1], draws[0].delta[2]}},
            {"theta", {{"lo", 0.5}, {"hi", 2.0}, {"points", 16}}},
            {"charges", {{"N", 3}}},
        };
        bool same = true;
        std::string detail;
        std::vector<std::pair<nlohmann::json, std::vector<std::string>>> jobs = {
            {enum_cfg, {"moduli.json", "summary.txt", "moduli_scatter.svg"}},
            {wil_cfg, {"scan.csv", "charges.json", "logW.svg"}}};
        for (auto& [cfg, files] : jobs) {
            auto ca = cfg, cb = cfg;
            ca["output_dir"] = "/tmp/monolab_acc_a";
            cb["output_dir"] = "/tmp/monolab_acc_b";
            std::filesystem::remove_all("/tmp/monolab_acc_a");
            std::filesystem::remove_all("/tmp/monolab_acc_b");
            auto ra = run(RunConfig::parse(ca));
            auto rb = run(RunConfig::parse(cb));
            for (auto& fsuf : files) {
                bool eq = !digest(ra, fsuf).empty() && digest(ra, fsuf) == digest(rb, fsuf);
                same = same && eq;
                detail += fsuf + (eq ? " ok; " : " DIFFERS; ");
            }
        }
        line(10, "determinism of result files", same, detail);
    }

    std::printf("----------------------------------------------\n");
    if (failures == 0) {
        std::printf("all gating criteria passed\n");
        return 0;
    }
    std::printf("%d gating criterion(s) failed\n", failures);
    return 1;
}

#pragma once

#include "monolab/fuchsian.hpp"
#include "monolab/transport.hpp"
#include "monolab/parallel.hpp"
#include "monolab/rng.hpp"

#include <algorithm>
#include <optional>
#include <string>

namespace monolab {

// ----------------------------------------------------------------------
// No-log obstruction at an apparent puncture.
//
// With the local expansion V = T + lambda^2 P
//                            = 2/(z-x)^2 + c/(z-x) + V0 + V1 (z-x) + ...
// the Frobenius series from the seed exponent -1 hits a resonance at
// order 3, where the recursion [(m-1)(m-2) - 2] u_m = c u_{m-1} + ...
// has a vanishing indicial factor. The obstruction works out to
//     R = c^3/4 - c V0 + V1 ,
// and since P is regular at x it is affine in lambda^2:
//     R(lambda^2) = [c^3/4 - c T0 + T1] + lambda^2 [P'(x) - c P(x)].
// Both coefficients must vanish for x to be monodromy-free at every
// lambda. The lambda^2 part is reported divided by P(x) (nonzero, and
// this removes the branch ambiguity):  E2 = dlogP(x) - c.
// ----------------------------------------------------------------------

namespace detail {

/// Value, first and second derivative at x of T minus its own singular
/// part at apparent puncture index a.
struct LocalT {
    cplx t0, t1, t2;
};

inline LocalT regular_part_at(const SphereData& sphere, const std::array<double, 3>& delta,
                              const std::array<cplx, 3>& res,
                              const std::vector<ApparentPair>& ap, std::size_t a) {
    LocalT r{cplx{0.0}, cplx{0.0}, cplx{0.0}};
    const cplx x = ap[a].x;
    for (int i = 0; i < 3; ++i) {
        cplx d = x - sphere.puncture(i);
        if (std::abs(d) < 1e-12) throw domain_error("apparent puncture on a primary puncture");
        cplx d2 = d * d, d3 = d2 * d, d4 = d2 * d2;
        r.t0 += delta[i] / d2 + res[i] / d;
        r.t1 += -2.0 * delta[i] / d3 - res[i] / d2;
        r.t2 += 6.0 * delta[i] / d4 + 2.0 * res[i] / d3;
    }
    for (std::size_t b = 0; b < ap.size(); ++b) {
        if (b == a) continue;
        cplx d = x - ap[b].x;
        if (std::abs(d) < 1e-12) throw domain_error("apparent punctures collide");
        cplx d2 = d * d, d3 = d2 * d, d4 = d2 * d2;
        r.t0 += 2.0 / d2 + ap[b].c / d;
        r.t1 += -4.0 / d3 - ap[b].c / d2;
        r.t2 += 12.0 / d4 + 2.0 * ap[b].c / d3;
    }
    return r;
}

} // namespace detail

/// The two obstruction values (lambda^0 coefficient, normalized lambda^2
/// coefficient) at apparent puncture a of an assembled operator.
inline std::pair<cplx, cplx> nolog_conditions(const FuchsianOperator& op, std::size_t a) {
    const auto& ap = op.apparent();
    if (a >= ap.size()) throw domain_error("nolog_conditions: index out of range");
    auto loc = detail::regular_part_at(op.sphere(), op.delta(), op.residues(), ap, a);
    const cplx c = ap[a].c;
    cplx e0 = c * c * c / 4.0 - c * loc.t0 + loc.t1;
    cplx e2 = op.sphere().dlogP(ap[a].x) - c;
    return {e0, e2};
}

/// The monodromy-free system on the 2L unknowns (x_a, c_a), with the
/// three accessory residues eliminated through the decay constraints.
/// Residual layout: (E0_1, E2_1, E0_2, E2_2, ...). Unknown layout:
/// (x_1, c_1, x_2, c_2, ...). The Jacobian is analytic.
class ApparentSystem {
public:
    ApparentSystem(SphereData sphere, std::array<double, 3> delta, std::size_t L)
        : sphere_(std::move(sphere)), delta_(delta), L_(L) {
        // inverse of the Vandermonde in the primary punctures, reused for
        // every residue solve and every Jacobian chain term
        const auto& z = sphere_.punctures();
        std::vector<cplx> V = {1.0, 1.0, 1.0,
                               z[0], z[1], z[2],
                               z[0] * z[0], z[1] * z[1], z[2] * z[2]};
        for (int col = 0; col < 3; ++col) {
            std::vector<cplx> e(3, cplx{0.0});
            e[col] = 1.0;
            auto x = lu_solve(V, e, 3);
            for (int row = 0; row < 3; ++row) Vinv_[row][col] = x[row];
        }
    }

    std::size_t size() const { return 2 * L_; }
    std::size_t L() const { return L_; }
    const SphereData& sphere() const { return sphere_; }
    const std::array<double, 3>& delta() const { return delta_; }
    bool analytic_jacobian() const { return true; }

    std::vector<ApparentPair> unpack(const std::vector<cplx>& u) const {
        std::vector<ApparentPair> ap(L_);
        for (std::size_t a = 0; a < L_; ++a) ap[a] = {u[2 * a], u[2 * a + 1]};
        return ap;
    }

    std::array<cplx, 3> residues_for(const std::vector<ApparentPair>& ap) const {
        cplx b0{0.0}, b1{0.0}, b2{0.0};
        const auto& z = sphere_.punctures();
        double dsum = delta_[0] + delta_[1] + delta_[2];
        cplx dzsum = delta_[0] * z[0] + delta_[1] * z[1] + delta_[2] * z[2];
        for (auto& p : ap) {
            b0 -= p.c;
            b1 -= p.c * p.x;
            b2 -= p.c * p.x * p.x + 4.0 * p.x;
        }
        b1 -= dsum + 2.0 * static_cast<double>(ap.size());
        b2 -= 2.0 * dzsum;
        return {Vinv_[0][0] * b0 + Vinv_[0][1] * b1 + Vinv_[0][2] * b2,
                Vinv_[1][0] * b0 + Vinv_[1][1] * b1 + Vinv_[1][2] * b2,
                Vinv_[2][0] * b0 + Vinv_[2][1] * b1 + Vinv_[2][2] * b2};
    }

    std::vector<cplx> eval(const std::vector<cplx>& u) const {
        std::vector<double> scales;
        return eval_with_scale(u, scales);
    }

    /// Residuals plus per-equation magnitude scales (the sum of |terms|
    /// entering each equation). Near a primary puncture the no-log
    /// residual is a difference of huge terms, so convergence and
    /// reporting use the backward error |F_i| / scale_i.
    std::vector<cplx> eval_with_scale(const std::vector<cplx>& u, std::vector<double>& scales) const {
        if (u.size() != size()) throw domain_error("ApparentSystem::eval: wrong size");
        auto ap = unpack(u);
        auto res = residues_for(ap);
        std::vector<cplx> F(size());
        scales.assign(size(), 1.0);
        for (std::size_t a = 0; a < L_; ++a) {
            auto loc = detail::regular_part_at(sphere_, delta_, res, ap, a);
            const cplx c = ap[a].c;
            F[2 * a] = c * c * c / 4.0 - c * loc.t0 + loc.t1;
            F[2 * a + 1] = sphere_.dlogP(ap[a].x) - c;
            scales[2 * a] = 1.0 + std::abs(c * c * c) / 4.0 + std::abs(c * loc.t0) + std::abs(loc.t1);
            scales[2 * a + 1] = 1.0 + std::abs(sphere_.dlogP(ap[a].x)) + std::abs(c);
        }
        return F;
    }

    /// row-major (2L)x(2L)
    std::vector<cplx> jacobian(const std::vector<cplx>& u) const {
        auto ap = unpack(u);
        auto res = residues_for(ap);
        const std::size_t n = size();
        std::vector<cplx> J(n * n, cplx{0.0});
        const auto& z = sphere_.punctures();

        // dres[i][col]: derivative of residue i w.r.t. unknown col
        std::vector<std::array<cplx, 3>> dres(n);
        for (std::size_t b = 0; b < L_; ++b) {
            std::array<cplx, 3> bx = {cplx{0.0}, -ap[b].c, -2.0 * ap[b].c * ap[b].x - 4.0};
            std::array<cplx, 3> bc = {cplx{-1.0}, -ap[b].x, -ap[b].x * ap[b].x};
            for (int i = 0; i < 3; ++i) {
                dres[2 * b][i] = Vinv_[i][0] * bx[0] + Vinv_[i][1] * bx[1] + Vinv_[i][2] * bx[2];
                dres[2 * b + 1][i] = Vinv_[i][0] * bc[0] + Vinv_[i][1] * bc[1] + Vinv_[i][2] * bc[2];
            }
        }

        for (std::size_t a = 0; a < L_; ++a) {
            auto loc = detail::regular_part_at(sphere_, delta_, res, ap, a);
            const cplx x = ap[a].x, c = ap[a].c;
            const std::size_t r0 = 2 * a, r2 = 2 * a + 1;

            // chain factors through the accessory residues:
            // dT0/dres_i = 1/(x-z_i), dT1/dres_i = -1/(x-z_i)^2
            std::array<cplx, 3> w0, w1;
            for (int i = 0; i < 3; ++i) {
                cplx d = x - z[i];
                w0[i] = 1.0 / d;
                w1[i] = -1.0 / (d * d);
            }
            auto chain = [&](std::size_t col, cplx& dT0, cplx& dT1) {
                for (int i = 0; i < 3; ++i) {
                    dT0 += dres[col][i] * w0[i];
                    dT1 += dres[col][i] * w1[i];
                }
            };

            for (std::size_t col = 0; col < n; ++col) {
                cplx dT0{0.0}, dT1{0.0};
                chain(col, dT0, dT1);
                std::size_t b = col / 2;
                bool is_x = (col % 2 == 0);
                if (b == a) {
                    if (is_x) {
                        dT0 += loc.t1;
                        dT1 += loc.t2;
                    }
                } else {
                    cplx d = x - ap[b].x, d2 = d * d, d3 = d2 * d, d4 = d2 * d2;
                    if (is_x) {
                        dT0 += 4.0 / d3 + ap[b].c / d2;
                        dT1 += -12.0 / d4 - 2.0 * ap[b].c / d3;
                    } else {
                        dT0 += 1.0 / d;
                        dT1 += -1.0 / d2;
                    }
                }
                J[r0 * n + col] = -c * dT0 + dT1;
            }
            J[r0 * n + 2 * a + 1] += 0.75 * c * c - loc.t0;
            J[r2 * n + 2 * a] = sphere_.d2logP(x);
            J[r2 * n + 2 * a + 1] = -1.0;
        }
        return J;
    }

private:
    SphereData sphere_;
    std::array<double, 3> delta_;
    std::size_t L_;
    std::array<std::array<cplx, 3>, 3> Vinv_;
};

// ----------------------------------------------------------------------
// Newton solver and moduli enumeration
// ----------------------------------------------------------------------

struct ModuliPoint {
    FuchsianOperator op;
    double residual = 0.0;     // backward error: max_i |F_i| / scale_i
    std::size_t L = 0;
    double residual_raw = 0.0; // max_i |F_i|
};

struct NewtonResult {
    bool converged = false;
    std::vector<cplx> u;
    double residual = 0.0;
    int iterations = 0;
    double pivot_ratio = 1.0;
    std::string message;
};

struct NewtonOptions {
    double tol = 1e-11;
    int max_iter = 60;
    double guard_radius = 0.0; // 0 -> 1e-4 * min puncture separation
    double max_coord = 50.0;   // runaway cutoff
};

/// Damped Newton on the apparent system, with a collision guard that
/// rescales any step taking an x_a within the guard radius of another
/// pole. Never returns a collided configuration.
inline NewtonResult solve_newton(const ApparentSystem& sys, std::vector<cplx> u,
                                 const NewtonOptions& opt = {}) {
    NewtonResult out;
    const std::size_t n = sys.size();
    if (u.size() != n) throw domain_error("solve_newton: initial point has wrong size");
    double guard = opt.guard_radius > 0 ? opt.guard_radius : 1e-4 * sys.sphere().min_separation();

    auto collided = [&](const std::vector<cplx>& v) {
        for (std::size_t a = 0; a < sys.L(); ++a) {
            cplx x = v[2 * a];
            if (std::abs(x) > opt.max_coord) return true;
            for (int i = 0; i < 3; ++i)
                if (std::abs(x - sys.sphere().puncture(i)) < guard) return true;
            for (std::size_t b = a + 1; b < sys.L(); ++b)
                if (std::abs(x - v[2 * b]) < guard) return true;
        }
        return false;
    };
    auto scaled_norm = [](const std::vector<cplx>& v, const std::vector<double>& s) {
        double m = 0;
        for (std::size_t i = 0; i < v.size(); ++i) m = std::max(m, std::abs(v[i]) / s[i]);
        return m;
    };

    if (n == 0) { // L = 0: nothing to solve
        out.converged = true;
        return out;
    }
    if (collided(u)) {
        out.message = "initial point violates the collision guard";
        return out;
    }

    std::vector<double> S;
    std::vector<cplx> F = sys.eval_with_scale(u, S);
    double fn = scaled_norm(F, S);
    for (int it = 0; it < opt.max_iter; ++it) {
        out.iterations = it + 1;
        if (fn <= opt.tol) {
            out.converged = true;
            break;
        }
        auto J = sys.jacobian(u);
        std::vector<cplx> rhs(n);
        for (std::size_t i = 0; i < n; ++i) rhs[i] = -F[i];
        double pr = 0.0;
        std::vector<cplx> du;
        try {
            du = lu_solve(std::move(J), std::move(rhs), n, &pr);
        } catch (const domain_error&) {
            out.message = "singular Jacobian";
            out.pivot_ratio = 0.0;
            break;
        }
        out.pivot_ratio = pr;
        if (pr < 1e-15) {
            out.message = "Jacobian numerically singular (pivot ratio " + std::to_string(pr) + ")";
            break;
        }

        double s = 1.0;
        bool accepted = false;
        for (int half = 0; half < 24; ++half) {
            std::vector<cplx> trial(n);
            for (std::size_t i = 0; i < n; ++i) trial[i] = u[i] + s * du[i];
            if (collided(trial)) { s *= 0.5; continue; }
            std::vector<cplx> Ft;
            std::vector<double> St;
            try {
                Ft = sys.eval_with_scale(trial, St);
            } catch (const domain_error&) {
                s *= 0.5;
                continue;
            }
            double fnt = scaled_norm(Ft, St);
            if (fnt < (1.0 - 0.25 * s) * fn || fnt <= opt.tol) {
                u = std::move(trial);
                F = std::move(Ft);
                S = std::move(St);
                fn = fnt;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if (!accepted) {
            out.message = "line search stalled";
            break;
        }
    }
    out.u = std::move(u);
    out.residual = fn;
    if (!out.converged && out.message.empty()) out.message = "max iterations reached";
    return out;
}

/// Reduced multi-start stage: the lambda^2 conditions c_a = dlogP(x_a)
/// are eliminated exactly, leaving L equations in the positions alone.
/// Much larger Newton basins near the punctures; results are polished on
/// the full joint system afterwards.
inline NewtonResult solve_newton_reduced(const ApparentSystem& sys, std::vector<cplx> xs,
                                         const NewtonOptions& opt = {}) {
    NewtonResult out;
    const std::size_t L = sys.L();
    if (xs.size() != L) throw domain_error("solve_newton_reduced: wrong size");
    double guard = opt.guard_radius > 0 ? opt.guard_radius : 1e-4 * sys.sphere().min_separation();

    auto lift = [&](const std::vector<cplx>& x) {
        std::vector<cplx> u(2 * L);
        for (std::size_t a = 0; a < L; ++a) {
            u[2 * a] = x[a];
            u[2 * a + 1] = sys.sphere().dlogP(x[a]);
        }
        return u;
    };
    auto collided = [&](const std::vector<cplx>& x) {
        for (std::size_t a = 0; a < L; ++a) {
            if (std::abs(x[a]) > opt.max_coord) return true;
            for (int i = 0; i < 3; ++i)
                if (std::abs(x[a] - sys.sphere().puncture(i)) < guard) return true;
            for (std::size_t b = a + 1; b < L; ++b)
                if (std::abs(x[a] - x[b]) < guard) return true;
        }
        return false;
    };
    auto eval_red = [&](const std::vector<cplx>& x, std::vector<double>& sc) {
        std::vector<double> S;
        auto F = sys.eval_with_scale(lift(x), S);
        std::vector<cplx> G(L);
        sc.resize(L);
        for (std::size_t a = 0; a < L; ++a) {
            G[a] = F[2 * a];
            sc[a] = S[2 * a];
        }
        return G;
    };
    auto scaled_norm = [](const std::vector<cplx>& v, const std::vector<double>& s) {
        double m = 0;
        for (std::size_t i = 0; i < v.size(); ++i) m = std::max(m, std::abs(v[i]) / s[i]);
        return m;
    };

    if (collided(xs)) { out.message = "seed violates the collision guard"; return out; }
    std::vector<double> Sc;
    auto G = eval_red(xs, Sc);
    double gn = scaled_norm(G, Sc);
    for (int it = 0; it < opt.max_iter; ++it) {
        out.iterations = it + 1;
        if (gn <= opt.tol) { out.converged = true; break; }
        auto Jfull = sys.jacobian(lift(xs));
        const std::size_t n = 2 * L;
        std::vector<cplx> Jr(L * L);
        for (std::size_t a = 0; a < L; ++a)
            for (std::size_t b = 0; b < L; ++b)
                Jr[a * L + b] = Jfull[(2 * a) * n + 2 * b] +
                                Jfull[(2 * a) * n + 2 * b + 1] * sys.sphere().d2logP(xs[b]);
        std::vector<cplx> rhs(L);
        for (std::size_t a = 0; a < L; ++a) rhs[a] = -G[a];
        double pr = 0.0;
        std::vector<cplx> dx;
        try {
            dx = lu_solve(std::move(Jr), std::move(rhs), L, &pr);
        } catch (const domain_error&) {
            out.message = "singular reduced Jacobian";
            break;
        }
        out.pivot_ratio = pr;
        double s = 1.0;
        bool accepted = false;
        for (int half = 0; half < 30; ++half) {
            std::vector<cplx> trial(L);
            for (std::size_t a = 0; a < L; ++a) trial[a] = xs[a] + s * dx[a];
            if (collided(trial)) { s *= 0.5; continue; }
            std::vector<cplx> Gt;
            std::vector<double> Sct;
            try {
                Gt = eval_red(trial, Sct);
            } catch (const domain_error&) {
                s *= 0.5;
                continue;
            }
            double gnt = scaled_norm(Gt, Sct);
            if (gnt < (1.0 - 0.25 * s) * gn || gnt <= opt.tol) {
                xs = std::move(trial);
                G = std::move(Gt);
                Sc = std::move(Sct);
                gn = gnt;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if (!accepted) { out.message = "line search stalled"; break; }
    }
    out.u = lift(xs);
    out.residual = gn;
    if (!out.converged && out.message.empty()) out.message = "max iterations reached";
    return out;
}

// ---- numerical-monodromy oracle ---------------------------------------

struct OracleReport {
    struct Entry {
        std::size_t puncture;
        cplx lambda2;
        double deviation; // distance of the loop matrix from +-identity
        int sign;         // +1 or -1, whichever identity is closer
    };
    std::vector<Entry> entries;
    bool pass = false;
    bool sign_consistent = true;
    double max_deviation = 0.0;
};

/// Monodromy around each apparent puncture at each sampled lambda^2 must
/// be +-identity; the sign must not depend on lambda.
inline OracleReport verify_monodromy_free(const ModuliPoint& point,
                                          const std::vector<cplx>& lambda2_samples,
                                          double tol = 1e-6,
                                          const TransportOptions& topts = {}) {
    OracleReport rep;
    const auto& op = point.op;
    for (std::size_t a = 0; a < op.L(); ++a) {
        cplx x = op.apparent()[a].x;
        double clear = 1e300;
        for (int i = 0; i < 3; ++i) clear = std::min(clear, std::abs(x - op.sphere().puncture(i)));
        for (std::size_t b = 0; b < op.L(); ++b)
            if (b != a) clear = std::min(clear, std::abs(x - op.apparent()[b].x));
        double radius = std::min(0.1 * op.sphere().min_separation(), 0.35 * clear);
        cplx base = x + 2.0 * radius;
        // nudge the base if the approach would clip another pole
        for (int k = 0; k < 8; ++k) {
            bool ok = op.dist_to_poles(base) > radius;
            if (ok) break;
            base = x + 2.0 * radius * std::exp(cplx{0.0, 0.7 * (k + 1)});
        }
        TransportOptions lopts = topts;
        double rmin_default = 1e-3 * op.sphere().min_separation();
        lopts.r_min = std::min(lopts.r_min > 0 ? lopts.r_min : rmin_default, 0.3 * radius);
        int sign_seen = 0;
        for (auto l2 : lambda2_samples) {
            auto tm = monodromy_around(op, l2, x, radius, base, lopts);
            double dplus = dist_inf(tm.m, Mat2::identity());
            double dminus = dist_inf(tm.m, Mat2::identity() * cplx{-1.0});
            int sign = dplus <= dminus ? +1 : -1;
            double dev = std::min(dplus, dminus);
            rep.entries.push_back({a, l2, dev, sign});
            rep.max_deviation = std::max(rep.max_deviation, dev);
            if (sign_seen == 0) sign_seen = sign;
            else if (sign_seen != sign) rep.sign_consistent = false;
        }
    }
    rep.pass = rep.sign_consistent && rep.max_deviation < tol;
    if (point.L == 0) rep.pass = true; // vacuously
    return rep;
}

// ---- L = 1 polynomial route --------------------------------------------

/// Durand-Kerner simultaneous root iteration for small-degree monic
/// polynomials (coefficients low-to-high, c.back() == 1).
inline std::vector<cplx> durand_kerner(std::vector<cplx> coef, int max_iter = 600) {
    const std::size_t n = coef.size() - 1;
    if (n == 0) return {};
    auto p = [&](cplx x) {
        cplx v{0.0};
        for (std::size_t k = coef.size(); k-- > 0;) v = v * x + coef[k];
        return v;
    };
    double radius = 1.0;
    for (std::size_t k = 0; k < n; ++k) radius = std::max(radius, 2.0 * std::pow(std::abs(coef[k]), 1.0 / (n - k)));
    std::vector<cplx> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = radius * std::exp(cplx{0.0, two_pi * (i + 0.25) / n});
    for (int it = 0; it < max_iter; ++it) {
        double moved = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cplx den{1.0};
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) den *= (x[i] - x[j]);
            cplx step = p(x[i]) / den;
            x[i] -= step;
            moved = std::max(moved, std::abs(step));
        }
        if (moved < 1e-14 * radius) break;
    }
    return x;
}

/// For L = 1 the no-log residual with c = dlogP(x) eliminated, multiplied
/// by prod_i (x - z_i)^3, is a polynomial (degree 3 for generic
/// parameters). Interpolate it exactly on a circle by DFT and return its
/// roots; `effective_degree_out` reports the numerically nonzero degree.
inline std::vector<cplx> l1_polynomial_roots(const ApparentSystem& sys,
                                             int* effective_degree_out = nullptr) {
    if (sys.L() != 1) throw domain_error("l1_polynomial_roots needs an L=1 system");
    const auto& s = sys.sphere();
    const int N = 16; // interpolation nodes; true degree is <= 6
    double Rn = 1.0;
    for (auto& z : s.punctures()) Rn = std::max(Rn, 2.5 * std::abs(z));
    std::vector<cplx> vals(N);
    for (int k = 0; k < N; ++k) {
        cplx x = Rn * std::exp(cplx{0.0, two_pi * k / N});
        std::vector<cplx> u = {x, s.dlogP(x)};
        cplx f = sys.eval(u)[0];
        cplx clear{1.0};
        for (auto& z : s.punctures()) clear *= (x - z) * (x - z) * (x - z);
        vals[k] = f * clear;
    }
    // inverse DFT for the coefficients of x^m on the scaled circle
    std::vector<cplx> coef(N);
    double cmax = 0.0;
    for (int m = 0; m < N; ++m) {
        cplx acc{0.0};
        for (int k = 0; k < N; ++k)
            acc += vals[k] * std::exp(cplx{0.0, -two_pi * m * k / N});
        coef[m] = acc / (static_cast<double>(N) * std::pow(Rn, m));
        cmax = std::max(cmax, std::abs(coef[m]));
    }
    int deg = 0;
    for (int m = 0; m < N; ++m)
        if (std::abs(coef[m]) > 1e-9 * cmax) deg = m;
    if (effective_degree_out) *effective_degree_out = deg;
    std::vector<cplx> monic(coef.begin(), coef.begin() + deg + 1);
    for (auto& c : monic) c /= coef[deg];
    return durand_kerner(std::move(monic));
}

/// Fiber sweep for L >= 2: with the other puncture positions frozen (and
/// every c = dlogP(x)), the first no-log residual times
/// prod_i (x - z_i)^3 prod_b (x - x_b)^3 is a polynomial in x. Its roots
/// give seed tuples that satisfy equation 1 exactly, which enormously
/// widens the basins of the coupled Newton solve.
inline std::vector<cplx> fiber_polynomial_roots(const ApparentSystem& sys,
                                                const std::vector<cplx>& frozen) {
    const std::size_t L = sys.L();
    if (frozen.size() + 1 != L) throw domain_error("fiber_polynomial_roots: need L-1 frozen points");
    const auto& s = sys.sphere();
    const int N = 32;
    double Rn = 1.0;
    for (auto& z : s.punctures()) Rn = std::max(Rn, std::abs(z));
    for (auto& x : frozen) Rn = std::max(Rn, std::abs(x));
    Rn *= 2.5;
    std::vector<cplx> vals(N);
    for (int k = 0; k < N; ++k) {
        cplx x = Rn * std::exp(cplx{0.0, two_pi * k / N});
        std::vector<cplx> u(2 * L);
        u[0] = x;
        u[1] = s.dlogP(x);
        for (std::size_t b = 0; b + 1 < L; ++b) {
            u[2 * (b + 1)] = frozen[b];
            u[2 * (b + 1) + 1] = s.dlogP(frozen[b]);
        }
        cplx f = sys.eval(u)[0];
        cplx clear{1.0};
        for (auto& z : s.punctures()) clear *= (x - z) * (x - z) * (x - z);
        for (auto& xb : frozen) clear *= (x - xb) * (x - xb) * (x - xb);
        vals[k] = f * clear;
    }
    std::vector<cplx> coef(N);
    double cmax = 0.0;
    for (int m = 0; m < N; ++m) {
        cplx acc{0.0};
        for (int k = 0; k < N; ++k)
            acc += vals[k] * std::exp(cplx{0.0, -two_pi * m * k / N});
        coef[m] = acc / (static_cast<double>(N) * std::pow(Rn, m));
        cmax = std::max(cmax, std::abs(coef[m]));
    }
    int deg = 0;
    for (int m = 0; m < N; ++m)
        if (std::abs(coef[m]) > 1e-8 * cmax) deg = m;
    if (deg == 0) return {};
    std::vector<cplx> monic(coef.begin(), coef.begin() + deg + 1);
    for (auto& c : monic) c /= coef[deg];
    return durand_kerner(std::move(monic));
}

// ---- enumeration -------------------------------------------------------

/// Genericity heuristic for parameter draws: reject resonant exponents,
/// where sqrt(1+4 delta_i) sits within `margin` of an integer, and
/// low-height rational a_i (denominator <= 4) within `margin`.
inline bool generic_parameters(const std::array<double, 3>& a,
                               const std::array<double, 3>& delta, double margin = 1e-3) {
    for (double d : delta) {
        double disc = 1.0 + 4.0 * d;
        if (disc >= 0.0) {
            double s = std::sqrt(disc);
            if (std::abs(s - std::round(s)) < margin) return false;
        }
    }
    for (double ai : a)
        for (int q = 1; q <= 4; ++q)
            if (std::abs(ai * q - std::round(ai * q)) < margin * q) return false;
    return true;
}

struct ModuliSet;

struct EnumerationStrategy {
    int grid_rings = 8;
    int grid_angles = 14;
    std::size_t max_solves = 9000;   // solver budget
    std::size_t random_tuples = 0;   // extra random seeds (L >= 2); 0 -> auto
    std::uint64_t seed = 20240001ull;
    NewtonOptions newton;
    double dedup_tol = 1e-6;
    bool run_oracle = true;
    std::vector<cplx> oracle_lambda2 = {cplx{0.0}, cplx{1.0}, cplx{-2.0, 3.0}};
    double oracle_tol = 1e-6;
    unsigned jobs = 1;
    /// optional: continue every point of a previously solved nearby
    /// (sphere, delta) into the target parameters and add as seeds
    const ModuliSet* homotopy_from = nullptr;
    int homotopy_steps = 8;
    /// optional (L >= 3): enumerate this many perturbed parameter draws
    /// and continue their points back to the target, unioning the results;
    /// different draws reach different Newton basins
    int auto_homotopy_rounds = 0;
};

struct ModuliSet {
    std::vector<ModuliPoint> points;
    std::size_t L = 0;
    SphereData sphere;
    std::array<double, 3> delta{};
    // diagnostics
    std::size_t seeds_tried = 0;
    std::size_t converged = 0;
    std::size_t oracle_rejected = 0;
    bool budget_exhausted = false;
    int l1_effective_degree = -1;         // L = 1 polynomial route diagnostic
    std::vector<double> oracle_deviation; // per surviving point
};

namespace detail {

inline std::vector<cplx> sorted_positions(const std::vector<ApparentPair>& ap) {
    std::vector<cplx> xs;
    for (auto& p : ap) xs.push_back(p.x);
    std::sort(xs.begin(), xs.end(), [](cplx a, cplx b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    return xs;
}

/// permutation-quotient distance between two solution vectors
inline double moduli_distance(const std::vector<ApparentPair>& a,
                              const std::vector<ApparentPair>& b) {
    if (a.size() != b.size()) return 1e300;
    std::vector<ApparentPair> sa = a, sb = b;
    auto lt = [](const ApparentPair& p, const ApparentPair& q) {
        if (p.x.real() != q.x.real()) return p.x.real() < q.x.real();
        return p.x.imag() < q.x.imag();
    };
    std::sort(sa.begin(), sa.end(), lt);
    std::sort(sb.begin(), sb.end(), lt);
    double d = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        d = std::max(d, std::abs(sa[i].x - sb[i].x));
        d = std::max(d, std::abs(sa[i].c - sb[i].c));
    }
    return d;
}

} // namespace detail

/// Multi-start enumeration of the discrete moduli set A^(L). Seeds are a
/// Chebyshev-like polar grid in the disk of radius 2*max|z_i| (plus random
/// tuples for L >= 2); every c_a is seeded from the lambda^2-part of the
/// no-log condition, c = dlogP(x). Results are merged in deterministic
/// order, deduplicated modulo permutations of the punctures, and (by
/// default) each survivor must pass the numerical-monodromy oracle.
inline ModuliSet enumerate_moduli(const SphereData& sphere, const std::array<double, 3>& delta,
                                  std::size_t L, const EnumerationStrategy& strat = {}) {
    ModuliSet set{.points = {}, .L = L, .sphere = sphere, .delta = delta};
    ApparentSystem sys(sphere, delta, L);

    if (L == 0) {
        set.points.push_back({FuchsianOperator(sphere, delta, {}), 0.0, 0});
        set.converged = 1;
        set.oracle_deviation.push_back(0.0);
        return set;
    }

    double rmax = 0.0;
    for (auto& z : sphere.punctures()) rmax = std::max(rmax, std::abs(z));
    const double R = 2.0 * rmax;
    const double minsep = sphere.min_separation();

    // Chebyshev-like radial levels, per-ring angular offset
    std::vector<cplx> grid;
    for (int m = 0; m < strat.grid_rings; ++m) {
        double r = R * std::cos((2.0 * m + 1.0) * pi / (4.0 * strat.grid_rings));
        for (int k = 0; k < strat.grid_angles; ++k) {
            double phi = two_pi * (k + 0.5 * (m % 2)) / strat.grid_angles;
            cplx x = r * std::exp(cplx{0.0, phi});
            bool ok = true;
            for (auto& z : sphere.punctures())
                if (std::abs(x - z) < 0.05 * minsep) ok = false;
            if (ok) grid.push_back(x);
        }
    }
    // roots can hide arbitrarily close to a primary puncture (a zero of the
    // residual migrates into the pole as parameters vary): tight polar
    // rings around each puncture
    std::vector<cplx> near_rings;
    for (auto& z : sphere.punctures())
        for (double f : {0.003, 0.009, 0.027, 0.08})
            for (int k = 0; k < 10; ++k)
                near_rings.push_back(z + f * minsep *
                                             std::exp(cplx{0.0, two_pi * (k + 0.35) / 10.0}));

    // the L = 1 polynomial route is complete; its roots also make the
    // best-informed building blocks for higher-L tuples
    std::vector<cplx> l1roots;
    {
        ApparentSystem sys1(sphere, delta, 1);
        int deg = 0;
        l1roots = l1_polynomial_roots(sys1, &deg);
        if (L == 1) set.l1_effective_degree = deg;
    }

    // seed tuples of positions
    std::vector<std::vector<cplx>> seeds;
    if (L == 1) {
        for (auto x : l1roots) seeds.push_back({x});
        for (auto x : grid) seeds.push_back({x});
        for (auto x : near_rings) seeds.push_back({x});
    } else {
        // cascade: solve L-1 first (no oracle, reduced budget), then sweep
        // the new coordinate along fibers anchored at lower-level roots
        // and at a coarse covering set
        EnumerationStrategy lower = strat;
        lower.run_oracle = false;
        lower.homotopy_from = nullptr;
        lower.max_solves = std::max<std::size_t>(1500, strat.max_solves / 4);
        auto below = enumerate_moduli(sphere, delta, L - 1, lower);

        std::vector<std::vector<cplx>> freezes;
        for (auto& pt : below.points) {
            std::vector<cplx> f;
            for (auto& ap : pt.op.apparent()) f.push_back(ap.x);
            freezes.push_back(std::move(f));
        }
        if (L == 2) {
            for (auto x : l1roots) freezes.push_back({x});
            for (double r : {0.4, 0.75, 1.0, 1.35, 1.9, 3.0, 5.5})
                for (int k = 0; k < 14; ++k) {
                    cplx x = r * std::exp(cplx{0.0, two_pi * (k + 0.3) / 14.0});
                    bool ok = true;
                    for (auto& z : sphere.punctures())
                        if (std::abs(x - z) < 0.03 * minsep) ok = false;
                    if (ok) freezes.push_back({x});
                }
            for (auto& z : sphere.punctures())
                for (double f : {0.008, 0.03, 0.1})
                    for (int k = 0; k < 8; ++k)
                        freezes.push_back({z + f * minsep * std::exp(cplx{0.0, two_pi * (k + 0.4) / 8.0})});
        } else {
            // pool of plausible single coordinates: lower-level roots'
            // coordinates, L=1 roots, coarse rings, near-puncture points
            std::vector<cplx> pool = l1roots;
            std::vector<cplx> lower_coords;
            for (auto& f : freezes)
                for (auto& x : f) {
                    pool.push_back(x);
                    lower_coords.push_back(x);
                }
            std::vector<cplx> ring_pool;
            for (double r : {0.5, 1.0, 1.7, 3.0, 5.5, 9.0})
                for (int k = 0; k < 8; ++k) {
                    cplx x = r * std::exp(cplx{0.0, two_pi * (k + 0.3) / 8.0});
                    bool ok = true;
                    for (auto& z : sphere.punctures())
                        if (std::abs(x - z) < 0.03 * minsep) ok = false;
                    if (ok) ring_pool.push_back(x);
                }
            pool.insert(pool.end(), ring_pool.begin(), ring_pool.end());
            for (auto& z : sphere.punctures())
                for (int k = 0; k < 4; ++k)
                    pool.push_back(z + 0.02 * minsep * std::exp(cplx{0.0, two_pi * (k + 0.4) / 4.0}));

            // one lower-level coordinate paired with a covering ring point
            // (roots often keep part of a lower configuration and move the
            // rest far away)
            if (L == 3)
                for (auto& lc : lower_coords)
                    for (auto& ring : ring_pool) {
                        if (std::abs(lc - ring) < 1e-3) continue;
                        freezes.push_back({lc, ring});
                    }

            // complete short freezes and add fresh (L-1)-tuples from the pool
            std::vector<std::vector<cplx>> more;
            std::function<void(std::vector<cplx>&, std::size_t)> fill =
                [&](std::vector<cplx>& acc, std::size_t start) {
                    if (more.size() >= 1200) return;
                    if (acc.size() == L - 1) { more.push_back(acc); return; }
                    for (std::size_t i = start; i < pool.size(); ++i) {
                        bool clash = false;
                        for (auto& x : acc)
                            if (std::abs(x - pool[i]) < 1e-3) clash = true;
                        if (clash) continue;
                        acc.push_back(pool[i]);
                        fill(acc, i + 1);
                        acc.pop_back();
                    }
                };
            std::vector<cplx> acc;
            fill(acc, 0);
            // interleave to spread coverage before the cap bites
            for (std::size_t i = 0; i < more.size(); ++i)
                freezes.push_back(std::move(more[(i * 7919) % more.size()]));
        }
        for (auto& f : freezes) {
            if (f.size() != L - 1) continue;
            if (seeds.size() >= (3 * strat.max_solves) / 4) break;
            std::vector<cplx> roots;
            try {
                roots = fiber_polynomial_roots(sys, f);
            } catch (const error&) {
                continue;
            }
            for (auto x : roots) {
                bool ok = std::abs(x) < 60.0;
                for (auto& z : sphere.punctures())
                    if (std::abs(x - z) < 1e-4 * minsep) ok = false;
                for (auto& xb : f)
                    if (std::abs(x - xb) < 1e-4 * minsep) ok = false;
                if (!ok) continue;
                std::vector<cplx> t = {x};
                t.insert(t.end(), f.begin(), f.end());
                seeds.push_back(std::move(t));
            }
        }
    }

    // homotopy continuation from a previously solved nearby parameter set
    if (strat.homotopy_from && strat.homotopy_from->L == L) {
        const ModuliSet& src = *strat.homotopy_from;
        int nsteps = std::max(1, strat.homotopy_steps);
        for (auto& pt : src.points) {
            std::vector<cplx> u(2 * L);
            for (std::size_t a = 0; a < L; ++a) {
                u[2 * a] = pt.op.apparent()[a].x;
                u[2 * a + 1] = pt.op.apparent()[a].c;
            }
            bool alive = true;
            for (int k = 1; k <= nsteps && alive; ++k) {
                double t = static_cast<double>(k) / nsteps;
                std::array<cplx, 3> zt;
                for (int i = 0; i < 3; ++i)
                    zt[i] = (1.0 - t) * src.sphere.puncture(i) + t * sphere.puncture(i);
                double a1 = (1.0 - t) * src.sphere.exponent(0) + t * sphere.exponent(0);
                double a2 = (1.0 - t) * src.sphere.exponent(1) + t * sphere.exponent(1);
                std::array<double, 3> dt;
                for (int i = 0; i < 3; ++i) dt[i] = (1.0 - t) * src.delta[i] + t * delta[i];
                try {
                    SphereData st(zt[0], zt[1], zt[2], a1, a2, sphere.regime());
                    ApparentSystem syst(st, dt, L);
                    auto r = solve_newton(syst, u, strat.newton);
                    if (!r.converged) { alive = false; break; }
                    u = r.u;
                } catch (const error&) {
                    alive = false;
                }
            }
            if (alive) {
                std::vector<cplx> xs(L);
                for (std::size_t a = 0; a < L; ++a) xs[a] = u[2 * a];
                seeds.push_back(std::move(xs));
            }
        }
    }
    std::size_t want_random = strat.random_tuples;
    if (want_random == 0 && L >= 2) want_random = 3000 * (L - 1);
    // random tuples: half area-uniform in the grid disk, half with a
    // log-uniform radius reaching far outside it (roots are not confined
    // to the puncture region)
    Rng rng(strat.seed);
    for (std::size_t k = 0; k < want_random && seeds.size() < strat.max_solves; ++k) {
        std::vector<cplx> xs;
        double cluster = rng.uniform();
        if (cluster < 0.3 && L >= 2) {
            // clustered tuple: several coordinates huddle around one spot
            double r = R * std::sqrt(rng.uniform());
            cplx w = r * std::exp(cplx{0.0, two_pi * rng.uniform()});
            for (std::size_t a = 0; a < L; ++a) {
                double spread = 0.02 * std::pow(60.0, rng.uniform());
                xs.push_back(w + spread * std::exp(cplx{0.0, two_pi * rng.uniform()}));
            }
        } else {
            for (std::size_t a = 0; a < L; ++a) {
                double r = (rng.uniform() < 0.5)
                               ? R * std::sqrt(rng.uniform())
                               : 0.1 * R * std::pow(30.0, rng.uniform());
                double phi = two_pi * rng.uniform();
                xs.push_back(r * std::exp(cplx{0.0, phi}));
            }
        }
        bool ok = true;
        for (auto& x : xs)
            for (auto& z : sphere.punctures())
                if (std::abs(x - z) < 0.002 * minsep) ok = false;
        for (std::size_t a = 0; a < L && ok; ++a)
            for (std::size_t b = a + 1; b < L; ++b)
                if (std::abs(xs[a] - xs[b]) < 0.002 * minsep) ok = false;
        if (ok) seeds.push_back(std::move(xs));
    }
    if (seeds.size() > strat.max_solves) {
        seeds.resize(strat.max_solves);
        set.budget_exhausted = true;
    }
    set.seeds_tried = seeds.size();

    // two-stage solve: reduced system for the multi-start, full joint
    // system as polish (direct full Newton as fallback); slot-indexed
    // results keep the merge deterministic
    std::vector<std::optional<NewtonResult>> results(seeds.size());
    parallel_for(seeds.size(), strat.jobs, [&](std::size_t i) {
        NewtonResult r;
        auto red = solve_newton_reduced(sys, seeds[i], strat.newton);
        if (red.converged) r = solve_newton(sys, red.u, strat.newton);
        if (!r.converged) {
            std::vector<cplx> u(2 * L);
            for (std::size_t a = 0; a < L; ++a) {
                u[2 * a] = seeds[i][a];
                u[2 * a + 1] = sphere.dlogP(seeds[i][a]);
            }
            r = solve_newton(sys, u, strat.newton);
        }
        if (r.converged) results[i] = std::move(r);
    });

    std::vector<std::vector<ApparentPair>> found;
    for (auto& r : results) {
        if (!r) continue;
        ++set.converged;
        auto ap = sys.unpack(r->u);
        bool dup = false;
        for (auto& f : found)
            if (detail::moduli_distance(f, ap) < strat.dedup_tol) { dup = true; break; }
        if (!dup) found.push_back(std::move(ap));
    }
    // deterministic output order: lexicographic on sorted positions
    std::sort(found.begin(), found.end(),
              [](const std::vector<ApparentPair>& a, const std::vector<ApparentPair>& b) {
                  auto ka = detail::sorted_positions(a), kb = detail::sorted_positions(b);
                  for (std::size_t i = 0; i < ka.size(); ++i) {
                      if (ka[i].real() != kb[i].real()) return ka[i].real() < kb[i].real();
                      if (ka[i].imag() != kb[i].imag()) return ka[i].imag() < kb[i].imag();
                  }
                  return false;
              });

    for (auto& ap : found) {
        FuchsianOperator op(sphere, delta, ap);
        std::vector<cplx> u(2 * L);
        for (std::size_t a = 0; a < L; ++a) { u[2 * a] = ap[a].x; u[2 * a + 1] = ap[a].c; }
        std::vector<double> S;
        auto F = sys.eval_with_scale(u, S);
        double resid = 0.0, resid_raw = 0.0;
        for (std::size_t i = 0; i < F.size(); ++i) {
            resid = std::max(resid, std::abs(F[i]) / S[i]);
            resid_raw = std::max(resid_raw, std::abs(F[i]));
        }
        ModuliPoint pt{std::move(op), resid, L, resid_raw};
        if (strat.run_oracle) {
            auto rep = verify_monodromy_free(pt, strat.oracle_lambda2, strat.oracle_tol);
            if (!rep.pass) { ++set.oracle_rejected; continue; }
            set.oracle_deviation.push_back(rep.max_deviation);
        } else {
            set.oracle_deviation.push_back(-1.0);
        }
        set.points.push_back(std::move(pt));
    }

    // union with continuations from perturbed parameter draws: basins
    // differ across parameters, so roots missed here are often found
    // elsewhere and carried over by the homotopy
    if (strat.auto_homotopy_rounds > 0 && L >= 3) {
        Rng hrng(strat.seed ^ 0x9e3779b97f4a7c15ull);
        for (int round = 0; round < strat.auto_homotopy_rounds; ++round) {
            double spread = 0.12 + 0.05 * round;
            double a1 = sphere.exponent(0) + hrng.uniform(-spread, spread);
            double a2 = sphere.exponent(1) + hrng.uniform(-spread, spread);
            std::array<double, 3> d2{};
            for (auto& v : d2) v = hrng.uniform(-0.24, 0.55 + 0.15 * round);
            if (!(a1 > 0.05 && a2 > 0.05 && 2.0 - a1 - a2 > 0.05)) continue;
            if (!generic_parameters({a1, a2, 2.0 - a1 - a2}, d2)) continue;
            try {
                EnumerationStrategy src_st = strat;
                src_st.auto_homotopy_rounds = 0;
                src_st.run_oracle = false;
                src_st.seed = strat.seed + 7919 * (round + 1);
                auto src = enumerate_moduli(SphereData::default_frame(a1, a2, sphere.regime()),
                                            d2, L, src_st);
                EnumerationStrategy cont_st = strat;
                cont_st.auto_homotopy_rounds = 0;
                cont_st.homotopy_from = &src;
                cont_st.max_solves = 50;
                cont_st.random_tuples = 1;
                cont_st.grid_rings = 1;
                cont_st.grid_angles = 1;
                auto cont = enumerate_moduli(sphere, delta, L, cont_st);
                for (std::size_t i = 0; i < cont.points.size(); ++i) {
                    bool dup = false;
                    for (auto& have : set.points)
                        if (detail::moduli_distance(have.op.apparent(),
                                                    cont.points[i].op.apparent()) < strat.dedup_tol)
                            dup = true;
                    if (!dup) {
                        set.points.push_back(cont.points[i]);
                        set.oracle_deviation.push_back(cont.oracle_deviation[i]);
                    }
                }
            } catch (const error&) {
                continue; // a bad source draw is skipped, not fatal
            }
        }
        // restore the deterministic output order
        std::vector<std::size_t> order(set.points.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
            auto ka = detail::sorted_positions(set.points[i].op.apparent());
            auto kb = detail::sorted_positions(set.points[j].op.apparent());
            for (std::size_t k = 0; k < ka.size(); ++k) {
                if (ka[k].real() != kb[k].real()) return ka[k].real() < kb[k].real();
                if (ka[k].imag() != kb[k].imag()) return ka[k].imag() < kb[k].imag();
            }
            return false;
        });
        std::vector<ModuliPoint> pts;
        std::vector<double> devs;
        for (auto i : order) {
            pts.push_back(std::move(set.points[i]));
            devs.push_back(set.oracle_deviation[i]);
        }
        set.points = std::move(pts);
        set.oracle_deviation = std::move(devs);
    }
    return set;
}

// ---- serialization ------------------------------------------------------

inline nlohmann::json to_json(const ModuliSet& s) {
    nlohmann::json pts = nlohmann::json::array();
    for (std::size_t i = 0; i < s.points.size(); ++i) {
        nlohmann::json p = {{"op", to_json(s.points[i].op)},
                            {"residual", s.points[i].residual},
                            {"residual_raw", s.points[i].residual_raw}};
        if (i < s.oracle_deviation.size()) p["oracle_deviation"] = s.oracle_deviation[i];
        pts.push_back(std::move(p));
    }
    return {{"L", s.L},
            {"sphere", to_json(s.sphere)},
            {"delta", {s.delta[0], s.delta[1], s.delta[2]}},
            {"points", pts},
            {"diagnostics", {{"seeds_tried", s.seeds_tried},
                             {"converged", s.converged},
                             {"oracle_rejected", s.oracle_rejected},
                             {"budget_exhausted", s.budget_exhausted}}}};
}

} // namespace monolab

#pragma once

#include "monolab/fuchsian.hpp"
#include "monolab/path.hpp"
#include "monolab/linalg.hpp"

#include <functional>
#include <optional>

namespace monolab {

struct TransportOptions {
    double tol = 1e-10;
    double r_min = 0.0;          // 0 -> 1e-3 * min puncture separation
    long max_steps = 4'000'000;  // global budget across the whole path
};

struct TransportMatrix {
    Mat2 m;
    PathSpec path;
    cplx lambda2{0.0};
    double tol_est = 0.0;
    long steps = 0;
    std::optional<BranchState> branch_end; // branch of P after the path

    double det_defect() const { return std::abs(m.det() - 1.0); }
};

namespace detail {

// Dormand-Prince 5(4) tableau
inline constexpr double dp_c[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
inline constexpr double dp_a[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
inline constexpr double dp_b5[7] = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192,
                                    -2187.0 / 6784, 11.0 / 84, 0.0};
inline constexpr double dp_e[7] = {71.0 / 57600, 0.0, -71.0 / 16695, 71.0 / 1920,
                                   -17253.0 / 339200, 22.0 / 525, -1.0 / 40};

} // namespace detail

/// Generic path-ordered transport of dPsi/dt = M(t) Psi along a PathSpec,
/// where the field supplies M(t) from the position, velocity and the
/// branch-tracked logarithms log(z - z_i) of the three primary punctures.
///
/// Field signature: Mat2 field(cplx z, const std::array<cplx,3>& logs, cplx zdot)
///
/// The branch of the multivalued weight is the germ anchored at
/// SphereData::branch_anchor(), continued to the path base, unless an
/// explicit initial state is supplied. Holonomies of loops based anywhere
/// in the anchor-reachable region are therefore mutually consistent.
///
/// Embedded 5(4) error control plus a secondary rejection on the drift of
/// det(Psi), which the traceless structure keeps conserved exactly in the
/// continuum. Step chords are capped at half the distance to the nearest
/// branch point so the per-step principal-log increments are unambiguous.
template <class Field>
TransportMatrix integrate_connection(const SphereData& sphere, Field&& field,
                                     const PathSpec& path, const TransportOptions& opts,
                                     const std::vector<cplx>& extra_poles = {},
                                     const BranchState* init_branch = nullptr) {
    path.validate_geometry();
    double r_min = opts.r_min > 0 ? opts.r_min : 1e-3 * sphere.min_separation();
    std::vector<cplx> guard(sphere.punctures().begin(), sphere.punctures().end());
    guard.insert(guard.end(), extra_poles.begin(), extra_poles.end());
    path.check_clearance(guard, r_min);

    Mat2 psi = Mat2::identity();
    if (init_branch &&
        std::abs(init_branch->point() - path.base) > 1e-12 * (1.0 + std::abs(path.base)))
        throw branch_error("initial branch state is not at the path base");
    BranchState branch = init_branch ? *init_branch : anchored_branch(sphere, path.base);
    const BranchState branch_start = branch;
    long steps = 0;
    double err_acc = 0.0;
    const double tol = opts.tol;

    auto dist_to_guard = [&](cplx z) {
        double d = 1e300;
        for (auto& p : guard) d = std::min(d, std::abs(z - p));
        return d;
    };

    for (auto& seg : path.segments) {
        double t = 0.0;
        double h = 0.05;
        while (t < 1.0) {
            if (++steps > opts.max_steps)
                throw integration_error("step budget exhausted at z = " +
                                        std::to_string(seg_point(seg, t).real()) + " + " +
                                        std::to_string(seg_point(seg, t).imag()) + "i");
            h = std::min(h, 1.0 - t);
            cplx z0 = seg_point(seg, t);
            double d0 = dist_to_guard(z0);
            // cap chord length for branch safety and pole resolution
            double vel = std::abs(seg_velocity(seg, t));
            if (vel > 0) h = std::min(h, 0.5 * d0 / vel);
            if (h < 1e-13)
                throw integration_error("step underflow near z = " +
                                        std::to_string(z0.real()) + " + " +
                                        std::to_string(z0.imag()) + "i");

            // stage evaluations
            Mat2 k[7];
            bool bad = false;
            for (int s = 0; s < 7 && !bad; ++s) {
                double ts = t + detail::dp_c[s] * h;
                cplx zs = seg_point(seg, ts);
                if (std::abs(zs - z0) > 0.6 * d0) { bad = true; break; }
                std::array<cplx, 3> logs;
                for (int i = 0; i < 3; ++i) {
                    cplx num = zs - sphere.puncture(i);
                    cplx den = z0 - sphere.puncture(i);
                    logs[i] = branch.log_rel(i) + std::log(num / den);
                }
                Mat2 y = psi;
                for (int j = 0; j < s; ++j)
                    y = y + (h * detail::dp_a[s][j]) * k[j];
                k[s] = field(zs, logs, seg_velocity(seg, ts)) * y;
            }
            if (bad) { h *= 0.5; continue; }

            Mat2 y5 = psi, errm = Mat2::zero();
            for (int s = 0; s < 7; ++s) {
                y5 = y5 + (h * detail::dp_b5[s]) * k[s];
                errm = errm + (h * detail::dp_e[s]) * k[s];
            }
            if (!std::isfinite(y5.norm_inf()))
                throw integration_error("overflow near z = " + std::to_string(z0.real()) +
                                        " + " + std::to_string(z0.imag()) + "i");
            double scale = 1.0 + std::max(psi.norm_inf(), y5.norm_inf());
            double errnorm = errm.norm_inf() / (tol * scale);
            double det_scale = 1.0 + scale * scale;
            double det_drift = std::abs(y5.det() - psi.det()) / det_scale;
            bool det_ok = det_drift <= 10.0 * tol * std::max(h, 1e-3);

            if (errnorm <= 1.0 && det_ok) {
                psi = y5;
                branch = branch.continue_to(sphere, seg_point(seg, t + h));
                t += h;
                err_acc += errm.norm_inf() / std::max(1.0, scale);
                double f = errnorm > 1e-12 ? 0.9 * std::pow(errnorm, -0.2) : 5.0;
                h *= std::min(5.0, std::max(0.2, f));
            } else {
                double f = errnorm > 1.0 ? 0.9 * std::pow(errnorm, -0.2) : 0.5;
                h *= std::max(0.1, std::min(0.9, f));
            }
        }
    }

    if (path.loop) {
        double drift = 0.0;
        auto w_end = branch.winding_offsets(sphere);
        auto w_beg = branch_start.winding_offsets(sphere);
        for (int i = 0; i < 3; ++i) {
            double w = w_end[i] - w_beg[i];
            drift = std::max(drift, std::abs(w - std::round(w)));
        }
        if (drift > 1e-6)
            throw branch_error("non-integer winding after a closed loop");
    }

    TransportMatrix out;
    out.m = psi;
    out.path = path;
    out.tol_est = std::max(err_acc, std::abs(psi.det() - 1.0));
    out.steps = steps;
    out.branch_end = branch;
    return out;
}

/// Transport of the companion system psi' = phi, phi' = (T + lambda^2 P) psi
/// in the (psi, psi') basis anchored at the path base. Concatenation
/// convention: transport(p1.then(p2)).m = transport(p2).m * transport(p1).m.
inline TransportMatrix transport(const FuchsianOperator& op, cplx lambda2,
                                 const PathSpec& path, const TransportOptions& opts = {},
                                 const BranchState* init_branch = nullptr) {
    std::vector<cplx> extra;
    for (auto& ap : op.apparent()) extra.push_back(ap.x);
    const SphereData& s = op.sphere();
    auto field = [&](cplx z, const std::array<cplx, 3>& logs, cplx zdot) -> Mat2 {
        cplx V = op.eval_T(z);
        if (lambda2 != cplx{0.0}) {
            cplx lg = s.norm_log();
            for (int i = 0; i < 3; ++i) lg -= (2.0 - s.exponent(i)) * logs[i];
            V += lambda2 * std::exp(lg);
        }
        return Mat2{cplx{0.0}, zdot, V * zdot, cplx{0.0}};
    };
    auto r = integrate_connection(s, field, path, opts, extra, init_branch);
    r.lambda2 = lambda2;
    return r;
}

/// Conjugated loop base -> circle around `center` -> base. The disk must
/// contain exactly one declared singular location (whether or not the
/// coefficient actually has a pole there for the given lambda^2).
inline TransportMatrix monodromy_around(const FuchsianOperator& op, cplx lambda2,
                                        cplx center, double radius, cplx base,
                                        const TransportOptions& opts = {}) {
    int inside = 0;
    for (int i = 0; i < 3; ++i)
        if (std::abs(op.sphere().puncture(i) - center) < radius) ++inside;
    for (auto& ap : op.apparent())
        if (std::abs(ap.x - center) < radius) ++inside;
    if (inside != 1)
        throw config_error("monodromy_around: disk must contain exactly one singular location, got " +
                           std::to_string(inside));
    return transport(op, lambda2, simple_loop(base, center, radius), opts);
}

inline cplx wilson_trace(const FuchsianOperator& op, cplx lambda2, const PathSpec& loop,
                         const TransportOptions& opts = {}) {
    if (!loop.loop) throw config_error("wilson_trace: path is not closed");
    return transport(op, lambda2, loop, opts).m.trace();
}

} // namespace monolab

#pragma once

#include "monolab/mshg.hpp"
#include "monolab/spectral.hpp"

namespace monolab {

// ------------------------------------------------------------------------
// Flat sl(2) connection built on a solved vacuum field:
//   A_z    = -1/2 deta sigma3 + e^{eta} sigma+ + lambda^2 P e^{-eta} sigma-
//   A_zbar = +1/2 dbeta sigma3 + e^{eta} sigma- + lambda_bar^2 Pbar e^{-eta} sigma+
// Zero curvature of this pair is the MShG equation, so the numerical
// flatness defect measures the discretization error of the field.
// ------------------------------------------------------------------------

class ConnectionEvaluator {
public:
    ConnectionEvaluator(const MShGField& field, SpectralPoint spectral)
        : f_(field), sp_(spectral) {
        if (!f_.diag.converged)
            throw domain_error("build_connection: field is not a converged solution");
    }

    const MShGField& field() const { return f_; }
    const SpectralPoint& spectral() const { return sp_; }

    /// P on the branch described by the tracked logs
    cplx weight(const std::array<cplx, 3>& logs) const {
        cplx lg = f_.sphere.norm_log();
        for (int i = 0; i < 3; ++i) lg -= (2.0 - f_.sphere.exponent(i)) * logs[i];
        return std::exp(lg);
    }

    Mat2 A_z(cplx z, const std::array<cplx, 3>& logs) const {
        double eta = f_.eta(z);
        cplx de = f_.deta_dz(z);
        cplx P = weight(logs);
        return Mat2{-0.5 * de, std::exp(eta), sp_.lambda2() * P * std::exp(-eta), 0.5 * de};
    }

    Mat2 A_zbar(cplx z, const std::array<cplx, 3>& logs) const {
        double eta = f_.eta(z);
        cplx deb = std::conj(f_.deta_dz(z)); // eta real
        cplx Pb = std::conj(weight(logs));
        return Mat2{0.5 * deb, sp_.lambda_bar2() * Pb * std::exp(-eta), std::exp(eta), -0.5 * deb};
    }

    /// dPsi/dt coefficient along a parametrized path
    Mat2 along(cplx z, const std::array<cplx, 3>& logs, cplx zdot) const {
        Mat2 az = A_z(z, logs);
        Mat2 ab = A_zbar(z, logs);
        return az * zdot + ab * std::conj(zdot);
    }

private:
    const MShGField& f_;
    SpectralPoint sp_;
};

inline ConnectionEvaluator build_connection(const MShGField& field, SpectralPoint spectral) {
    return ConnectionEvaluator(field, spectral);
}

/// Path-ordered transport of the massive connection; the loop must stay
/// clear of the subtraction cores.
inline TransportMatrix pde_transport(const ConnectionEvaluator& conn, const PathSpec& path,
                                     const TransportOptions& opts = {},
                                     const BranchState* init_branch = nullptr) {
    TransportOptions o = opts;
    double rc = conn.field().core_radius();
    o.r_min = std::max(opts.r_min, 1.02 * rc);
    auto field = [&](cplx z, const std::array<cplx, 3>& logs, cplx zdot) {
        return conn.along(z, logs, zdot);
    };
    auto r = integrate_connection(conn.field().sphere, field, path, o, {}, init_branch);
    r.lambda2 = conn.spectral().lambda2();
    return r;
}

inline cplx pde_wilson(const MShGField& field, SpectralPoint spectral, const PathSpec& loop,
                       const TransportOptions& opts = {}) {
    if (!loop.loop) throw config_error("pde_wilson: path is not closed");
    auto conn = build_connection(field, spectral);
    return pde_transport(conn, loop, opts).m.trace();
}

/// Scan W(theta) in the massive picture at fixed rho.
inline ScanResult wilson_scan_pde(const MShGField& field, double rho,
                                  const std::vector<cplx>& thetas, const PathSpec& loop,
                                  const TransportOptions& opts = {}, unsigned jobs = 1) {
    return scan_wilson(thetas, [&](cplx theta) {
        auto conn = build_connection(field, SpectralPoint::from_theta(rho, theta));
        auto tm = pde_transport(conn, loop, opts);
        return ScanSample{theta, tm.m.trace(), tm.tol_est};
    }, jobs);
}

/// Literal curvature defect || dbar A_z - d A_zbar + [A_z, A_zbar] || at a
/// point, with matrix entries differentiated by central differences and
/// the weight continued consistently from the point's branch.
inline double flatness_defect(const ConnectionEvaluator& conn, cplx z, double delta) {
    const SphereData& s = conn.field().sphere;
    BranchState b = anchored_branch(s, z);
    auto at = [&](cplx q) {
        BranchState bq = b.continue_to(s, q);
        std::array<cplx, 3> logs;
        for (int i = 0; i < 3; ++i) logs[i] = bq.log_rel(i);
        return std::make_pair(conn.A_z(q, logs), conn.A_zbar(q, logs));
    };
    auto [azE, abE] = at(z + delta);
    auto [azW, abW] = at(z - delta);
    auto [azN, abN] = at(z + cplx{0.0, delta});
    auto [azS, abS] = at(z - cplx{0.0, delta});
    auto [az0, ab0] = at(z);
    Mat2 dAz_dx = (azE - azW) * (1.0 / (2 * delta));
    Mat2 dAz_dy = (azN - azS) * (1.0 / (2 * delta));
    Mat2 dAb_dx = (abE - abW) * (1.0 / (2 * delta));
    Mat2 dAb_dy = (abN - abS) * (1.0 / (2 * delta));
    // d_zbar = (d_x + i d_y)/2, d_z = (d_x - i d_y)/2
    Mat2 dbarAz = (dAz_dx + cplx{0.0, 1.0} * dAz_dy) * 0.5;
    Mat2 dAb = (dAb_dx - cplx{0.0, 1.0} * dAb_dy) * 0.5;
    Mat2 curv = dbarAz - dAb + (az0 * ab0 - ab0 * az0);
    return curv.norm_inf();
}

// ---- monodromy-free puncture expansions (validation only) -------------------

struct PunctureExpansion {
    std::vector<cplx> x;     // holomorphic-side punctures
    std::vector<cplx> y_bar; // antiholomorphic-side punctures (positions y_b)
};

struct ExpansionFit {
    char side;        // 'x' or 'y'
    cplx position;
    double pole_dev;      // | fitted leading pole coefficient - (+1) |
    double const_dev;     // | fitted constant - gamma/2 |
    double companion_dev; // | fitted companion pole coefficient - (-1) |
};

/// Validate the local expansions
///   d_z eta = 1/(z-x_a) + gamma_a/2 + o(1),  d_zbar eta = -1/(zbar-xbar_a) + o(1)
/// (mirrored at y_b) for an externally supplied candidate field, given as
/// callables for d_z eta and d_zbar eta. This artifact does not solve with
/// punctures; it validates candidates only.
inline std::vector<ExpansionFit> validate_puncture_expansion(
    const SphereData& sphere, const std::function<cplx(cplx)>& deta_dz,
    const std::function<cplx(cplx)>& deta_dzbar, const PunctureExpansion& punctures,
    double radius = 0.02, int samples = 64) {
    std::vector<ExpansionFit> out;
    auto ring_fit = [&](cplx center, const std::function<cplx(cplx)>& g, bool holomorphic) {
        // trapezoid contour integrals on the circle: pole coefficient and
        // angular-mean constant term (the pole has zero angular mean)
        cplx pole{0.0}, constant{0.0};
        for (int k = 0; k < samples; ++k) {
            cplx w = std::exp(cplx{0.0, two_pi * (k + 0.5) / samples});
            cplx zp = center + radius * w;
            cplx val = g(zp);
            if (holomorphic) pole += val * (zp - center);
            else pole += val * std::conj(zp - center);
            constant += val;
        }
        pole /= static_cast<double>(samples);
        constant /= static_cast<double>(samples);
        return std::make_pair(pole, constant);
    };
    for (auto& xa : punctures.x) {
        auto [pole, cst] = ring_fit(xa, deta_dz, true);
        auto [pole2, cst2] = ring_fit(xa, deta_dzbar, false);
        (void)cst2;
        cplx gamma = sphere.dlogP(xa);
        out.push_back({'x', xa, std::abs(pole - 1.0), std::abs(cst - 0.5 * gamma),
                       std::abs(pole2 + 1.0)});
    }
    for (auto& yb : punctures.y_bar) {
        auto [pole, cst] = ring_fit(yb, deta_dzbar, false);
        auto [pole2, cst2] = ring_fit(yb, deta_dz, true);
        (void)cst2;
        cplx gamma_bar = std::conj(sphere.dlogP(yb));
        out.push_back({'y', yb, std::abs(pole - 1.0), std::abs(cst - 0.5 * gamma_bar),
                       std::abs(pole2 + 1.0)});
    }
    return out;
}

} // namespace monolab

#pragma once

#include "monolab/transport.hpp"
#include "monolab/parallel.hpp"

#include <functional>
#include <optional>

namespace monolab {

/// Spectral parameter bookkeeping: theta = (1/2) log(lambda/lambda_bar),
/// rho^2 = lambda lambda_bar. Derived values are recomputed on demand.
struct SpectralPoint {
    cplx lambda{1.0};
    cplx lambda_bar{1.0};

    static SpectralPoint from_theta(double rho, cplx theta) {
        return {rho * std::exp(theta), rho * std::exp(-theta)};
    }
    cplx theta() const { return 0.5 * std::log(lambda / lambda_bar); }
    cplx rho2() const { return lambda * lambda_bar; }
    cplx lambda2() const { return lambda * lambda; }
    cplx lambda_bar2() const { return lambda_bar * lambda_bar; }
};

struct ScanSample {
    cplx theta;
    cplx W;
    double err = 0.0;
};

struct ScanResult {
    std::vector<ScanSample> samples;
    bool truncated = false;
    cplx theta_truncated{0.0}; // first theta that overflowed, if truncated
};

/// Evaluate W over a theta grid with a user-supplied W(theta); overflow
/// at large |Re theta| truncates the scan instead of failing it.
inline ScanResult scan_wilson(const std::vector<cplx>& thetas,
                              const std::function<ScanSample(cplx)>& wfun, unsigned jobs = 1) {
    std::vector<std::optional<ScanSample>> out(thetas.size());
    std::vector<std::optional<cplx>> failed(thetas.size());
    parallel_for(thetas.size(), jobs, [&](std::size_t i) {
        try {
            out[i] = wfun(thetas[i]);
        } catch (const integration_error&) {
            failed[i] = thetas[i];
        }
    });
    ScanResult r;
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        if (out[i]) {
            r.samples.push_back(*out[i]);
        } else if (failed[i]) {
            if (!r.truncated || std::abs(failed[i]->real()) < std::abs(r.theta_truncated.real())) {
                r.truncated = true;
                r.theta_truncated = *failed[i];
            }
        }
    }
    return r;
}

/// CFT-side scan: lambda_bar is fixed to sqrt(lambda_bar_scale2) and only
/// lambda^2 = lambda_bar_scale2 * exp(2 theta) enters the operator.
inline ScanResult wilson_scan_ode(const FuchsianOperator& op, const std::vector<cplx>& thetas,
                                  const PathSpec& loop, cplx lambda_bar_scale2 = cplx{1.0},
                                  const TransportOptions& opts = {}, unsigned jobs = 1) {
    return scan_wilson(thetas, [&](cplx theta) {
        auto tm = transport(op, lambda_bar_scale2 * std::exp(2.0 * theta), loop, opts);
        return ScanSample{theta, tm.m.trace(), tm.tol_est};
    }, jobs);
}

// ---- charge extraction --------------------------------------------------

struct ChargeSpectrum {
    cplx C{0.0};
    std::vector<cplx> q;     // q_{2n-1}, n = 1..N (positive-theta side)
    std::vector<cplx> q_bar; // filled by the mirrored extraction
    int N = 0;
    double window_lo = 0.0, window_hi = 0.0;
    double fit_residual = 0.0;
    double condition = 0.0;
    bool reliable = true;
};

enum class ChargeSide { positive, negative };

/// Least-squares fit of log W in the exponential basis
///   e^{theta}, e^{-theta}, e^{-3 theta}, ..., e^{-(2N-1) theta}
/// over a real-theta window (mirrored basis for the negative side).
/// The branch of log W is anchored to the principal value at the sample
/// of smallest |W| and continued by ratio continuity.
inline ChargeSpectrum extract_charges(std::vector<ScanSample> samples, int N = 4,
                                      ChargeSide side = ChargeSide::positive,
                                      double cond_threshold = 1e12,
                                      double residual_threshold = 1e-3) {
    if (N < 1) throw domain_error("extract_charges: N must be >= 1");
    if (samples.size() < static_cast<std::size_t>(N + 2))
        throw domain_error("extract_charges: not enough samples for the requested order");
    for (auto& s : samples) {
        if (std::abs(s.theta.imag()) > 1e-12)
            throw domain_error("extract_charges: fit window must lie on the real theta axis");
        if (std::abs(s.W) == 0.0)
            throw domain_error("extract_charges: W vanishes inside the window");
    }
    std::sort(samples.begin(), samples.end(),
              [](const ScanSample& a, const ScanSample& b) { return a.theta.real() < b.theta.real(); });

    // continuous log anchored at the smallest |W|; adjacent samples whose
    // phase ratio approaches the cut make the continuation ambiguous
    std::size_t anchor = 0;
    for (std::size_t i = 1; i < samples.size(); ++i)
        if (std::abs(samples[i].W) < std::abs(samples[anchor].W)) anchor = i;
    auto safe_ratio_log = [](cplx a, cplx b) {
        cplx r = std::log(a / b);
        if (std::abs(r.imag()) > 2.5)
            throw domain_error("extract_charges: log-branch jump inside the window "
                               "(sample the window more densely)");
        return r;
    };
    std::vector<cplx> y(samples.size());
    y[anchor] = std::log(samples[anchor].W);
    for (std::size_t i = anchor + 1; i < samples.size(); ++i)
        y[i] = y[i - 1] + safe_ratio_log(samples[i].W, samples[i - 1].W);
    for (std::size_t i = anchor; i-- > 0;)
        y[i] = y[i + 1] + safe_ratio_log(samples[i].W, samples[i + 1].W);

    const double sgn = (side == ChargeSide::positive) ? 1.0 : -1.0;
    std::vector<std::vector<double>> cols;
    cols.emplace_back(); // C e^{+sgn theta}
    for (auto& s : samples) cols.back().push_back(std::exp(sgn * s.theta.real()));
    for (int n = 1; n <= N; ++n) {
        cols.emplace_back();
        for (auto& s : samples)
            cols.back().push_back(std::exp(-sgn * (2.0 * n - 1.0) * s.theta.real()));
    }

    ChargeSpectrum cs;
    cs.N = N;
    cs.window_lo = samples.front().theta.real();
    cs.window_hi = samples.back().theta.real();
    auto coef = lsq_real_basis(cols, y, &cs.condition);
    cs.C = coef[0];
    for (int n = 1; n <= N; ++n) {
        if (side == ChargeSide::positive) cs.q.push_back(coef[n]);
        else cs.q_bar.push_back(coef[n]);
    }
    double maxres = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        cplx fit{0.0};
        for (std::size_t j = 0; j < cols.size(); ++j) fit += coef[j] * cols[j][i];
        maxres = std::max(maxres, std::abs(fit - y[i]));
    }
    cs.fit_residual = maxres;
    cs.reliable = (cs.condition < cond_threshold) && (maxres < residual_threshold);
    return cs;
}

/// Charge spectra of every point of an enumerated moduli set, from a
/// fixed-window scan. Spectra label the points; coincidences are the
/// caller's to report.
template <class ModuliSetT>
std::vector<ChargeSpectrum> moduli_charge_spectra(const ModuliSetT& set, double tol = 1e-11,
                                                  unsigned jobs = 1, double lo = 2.0,
                                                  double hi = 3.0, int points = 18, int N = 2) {
    std::vector<ChargeSpectrum> out(set.points.size());
    for (std::size_t i = 0; i < set.points.size(); ++i) {
        auto loop = pochhammer_loop(set.points[i].op.sphere(), 0, 1, cplx{0.0});
        std::vector<cplx> grid;
        for (int k = 0; k < points; ++k)
            grid.push_back(cplx{lo + (hi - lo) * k / (points - 1.0), 0.0});
        auto scan = wilson_scan_ode(set.points[i].op, grid, loop, cplx{1.0}, {.tol = tol}, jobs);
        out[i] = extract_charges(scan.samples, N);
    }
    return out;
}

// ---- classical/quantum parameter dictionary ------------------------------

struct DictionaryResult {
    Regime regime = Regime::symmetric;
    std::array<double, 3> alpha2{};  // alpha_i^2 = a_i / 4
    std::vector<double> k;           // quasimomenta (3 symmetric, 2 unitary)
    double muR = 0.0;                // mu R = 2 rho
    double b2 = 0.0;                 // unitary regime: alpha_3^2 = -b^2
};

/// m_i must lie in [-1/2, -(2 - a_i)/4]; the bounds come with the model.
inline void check_m_domain(double m, double a, int i) {
    const double lo = -0.5, hi = -0.25 * (2.0 - a);
    const double eps = 1e-12;
    if (m < lo - eps || m > hi + eps)
        throw domain_error("m" + std::to_string(i + 1) + " = " + std::to_string(m) +
                           " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

inline DictionaryResult dictionary(const std::array<double, 3>& a, const std::vector<double>& m,
                                   double rho, Regime regime = Regime::symmetric) {
    if (std::abs(a[0] + a[1] + a[2] - 2.0) > 1e-12)
        throw domain_error("dictionary: exponents must satisfy a1+a2+a3 = 2");
    if (rho <= 0.0) throw domain_error("dictionary: rho must be positive");
    DictionaryResult r;
    r.regime = regime;
    for (int i = 0; i < 3; ++i) r.alpha2[i] = a[i] / 4.0;
    double sum = r.alpha2[0] + r.alpha2[1] + r.alpha2[2];
    if (std::abs(sum - 0.5) > 1e-14)
        throw domain_error("dictionary: alpha^2 sum violates the 1/2 constraint");
    if (regime == Regime::symmetric) {
        if (m.size() != 3) throw domain_error("dictionary: symmetric regime needs m = (m1,m2,m3)");
        for (int i = 0; i < 3; ++i) {
            if (!(a[i] > 0.0 && a[i] < 2.0))
                throw domain_error("dictionary: symmetric regime needs 0 < a_i < 2");
            check_m_domain(m[i], a[i], i);
            r.k.push_back((2.0 * m[i] + 1.0) / a[i]);
        }
    } else {
        if (m.size() != 2) throw domain_error("dictionary: unitary regime needs m = (m1,m2)");
        if (!(a[0] > 0.0 && a[1] > 0.0 && a[2] < 0.0))
            throw domain_error("dictionary: unitary regime needs a1,a2 > 0 > a3");
        for (int i = 0; i < 2; ++i) {
            check_m_domain(m[i], a[i], i);
            r.k.push_back((2.0 * m[i] + 1.0) / a[i]);
        }
        r.b2 = -r.alpha2[2];
    }
    r.muR = 2.0 * rho;
    return r;
}

/// Exact inverse of the dictionary on its domain.
inline void dictionary_invert(const DictionaryResult& d, std::array<double, 3>& a,
                              std::vector<double>& m, double& rho) {
    for (int i = 0; i < 3; ++i) a[i] = 4.0 * d.alpha2[i];
    m.clear();
    for (std::size_t i = 0; i < d.k.size(); ++i) m.push_back((d.k[i] * a[i] - 1.0) / 2.0);
    rho = d.muR / 2.0;
}

inline nlohmann::json to_json(const ChargeSpectrum& cs) {
    nlohmann::json q = nlohmann::json::array(), qb = nlohmann::json::array();
    for (auto& v : cs.q) q.push_back(to_json(v));
    for (auto& v : cs.q_bar) qb.push_back(to_json(v));
    return {{"C", to_json(cs.C)},          {"q", q},
            {"q_bar", qb},                 {"N", cs.N},
            {"window", {cs.window_lo, cs.window_hi}},
            {"fit_residual", cs.fit_residual},
            {"condition", cs.condition},   {"reliable", cs.reliable}};
}

inline nlohmann::json to_json(const DictionaryResult& d) {
    return {{"regime", to_string(d.regime)},
            {"alpha2", {d.alpha2[0], d.alpha2[1], d.alpha2[2]}},
            {"k", d.k},
            {"muR", d.muR},
            {"b2", d.b2}};
}

} // namespace monolab

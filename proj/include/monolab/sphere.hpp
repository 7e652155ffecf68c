#pragma once

#include "monolab/common.hpp"

#include <json.hpp>

#include <array>
#include <optional>

namespace monolab {

enum class Regime { symmetric, unitary };

inline const char* to_string(Regime r) {
    return r == Regime::symmetric ? "symmetric" : "unitary";
}

struct Mobius {
    cplx m00{1.0}, m01{0.0}, m10{0.0}, m11{1.0};

    cplx det() const { return m00 * m11 - m01 * m10; }
    cplx operator()(cplx z) const { return (m00 * z + m01) / (m10 * z + m11); }
    cplx deriv(cplx z) const {
        cplx den = m10 * z + m11;
        return det() / (den * den);
    }
};

/// The three primary punctures z_i with exponents a_i, a1+a2+a3 = 2.
/// The weight function
///   P(z) = (z3-z2)^{a1} (z1-z3)^{a2} (z2-z1)^{a3}
///          / [(z-z1)^{2-a1} (z-z2)^{2-a2} (z-z3)^{2-a3}]
/// is multivalued; evaluation goes through branch-tracked logarithms
/// (see BranchState below). P(z)(dz)^2 is a quadratic differential:
/// pushforwards adjust the stored normalization so the transformation
/// law holds exactly, not just up to a constant phase.
class SphereData {
public:
    /// a3 is always solved from the constraint, never stored independently.
    SphereData(cplx z1, cplx z2, cplx z3, double a1, double a2,
               Regime regime = Regime::symmetric, cplx norm_log_offset = cplx{0.0})
        : z_{z1, z2, z3}, a_{a1, a2, 2.0 - a1 - a2}, regime_(regime),
          norm_log_offset_(norm_log_offset) {
        validate();
        norm_log_ = a_[0] * std::log(z_[2] - z_[1])
                  + a_[1] * std::log(z_[0] - z_[2])
                  + a_[2] * std::log(z_[1] - z_[0])
                  + norm_log_offset_;
    }

    /// Default projective frame: punctures at the cube roots of unity,
    /// which keeps z = infinity an ordinary point and the formulas
    /// symmetric under cyclic relabeling.
    static SphereData default_frame(double a1, double a2, Regime regime = Regime::symmetric) {
        const cplx w = std::exp(cplx{0.0, two_pi / 3.0});
        return SphereData(cplx{1.0}, w, std::conj(w), a1, a2, regime);
    }

    const std::array<cplx, 3>& punctures() const { return z_; }
    cplx puncture(int i) const { return z_.at(i); }
    const std::array<double, 3>& exponents() const { return a_; }
    double exponent(int i) const { return a_.at(i); }
    Regime regime() const { return regime_; }
    cplx norm_log() const { return norm_log_; }
    cplx norm_log_offset() const { return norm_log_offset_; }

    double min_separation() const {
        return std::min({std::abs(z_[0] - z_[1]), std::abs(z_[1] - z_[2]),
                         std::abs(z_[2] - z_[0])});
    }

    /// Fixed reference point where the branch germ of P is anchored
    /// (principal logs there). Everything that needs "the" branch of P
    /// continues the germ from here, so that holonomies around
    /// zero-winding loops are globally consistent.
    cplx branch_anchor() const {
        cplx c = (z_[0] + z_[1] + z_[2]) / 3.0;
        double safe = 0.2 * min_separation();
        for (int k = 0; k < 16; ++k) {
            bool ok = true;
            for (auto& z : z_)
                if (std::abs(c - z) < safe) ok = false;
            if (ok) return c;
            c += cplx{0.31, 0.17} * safe;
        }
        throw domain_error("could not place a branch anchor away from the punctures");
    }

    /// d/dz log P(z) = -sum_i (2-a_i)/(z-z_i); rational, branch-free.
    cplx dlogP(cplx z) const {
        cplx s{0.0};
        for (int i = 0; i < 3; ++i) s -= (2.0 - a_[i]) / (z - z_[i]);
        return s;
    }
    cplx d2logP(cplx z) const {
        cplx s{0.0};
        for (int i = 0; i < 3; ++i) s += (2.0 - a_[i]) / sqr(z - z_[i]);
        return s;
    }

    /// |P(z)|^2, single-valued (all branch phases drop out).
    double absP2(cplx z) const {
        double lg = 2.0 * norm_log_.real();
        for (int i = 0; i < 3; ++i) lg -= 2.0 * (2.0 - a_[i]) * std::log(std::abs(z - z_[i]));
        return std::exp(lg);
    }
    /// log|P(z)|, single-valued.
    double logAbsP(cplx z) const {
        double lg = norm_log_.real();
        for (int i = 0; i < 3; ++i) lg -= (2.0 - a_[i]) * std::log(std::abs(z - z_[i]));
        return lg;
    }

private:
    void validate() const {
        const double eps = 1e-12;
        if (std::abs(z_[0] - z_[1]) < eps || std::abs(z_[1] - z_[2]) < eps ||
            std::abs(z_[2] - z_[0]) < eps)
            throw domain_error("SphereData: punctures must be pairwise distinct");
        if (regime_ == Regime::symmetric) {
            for (double a : a_)
                if (!(a > 0.0 && a < 2.0))
                    throw domain_error("SphereData: symmetric regime needs 0 < a_i < 2");
        } else {
            if (!(a_[0] > 0.0) || !(a_[1] > 0.0) || !(a_[2] < 0.0))
                throw domain_error("SphereData: unitary regime needs a1,a2 > 0 and a3 < 0");
        }
    }

    std::array<cplx, 3> z_;
    std::array<double, 3> a_;
    Regime regime_;
    cplx norm_log_offset_;
    cplx norm_log_;
};

/// Continuously tracked logarithms log(z - z_i) along a path. Immutable:
/// continue_to returns a new state. Continuation subdivides each straight
/// move so the per-step argument change at every puncture stays below
/// pi/4, which makes the principal-log increment unambiguous.
class BranchState {
public:
    BranchState(const SphereData& s, cplx base)
        : point_(base) {
        for (int i = 0; i < 3; ++i) {
            cplx d = base - s.puncture(i);
            if (std::abs(d) < 1e-13)
                throw domain_error("BranchState: base point sits on a puncture");
            logs_[i] = std::log(d);
        }
    }

    cplx point() const { return point_; }
    cplx log_rel(int i) const { return logs_.at(i); }

    /// Accumulated winding offsets: (Im log - principal arg) / 2pi,
    /// integral (up to rounding) by construction.
    std::array<double, 3> winding_offsets(const SphereData& s) const {
        std::array<double, 3> w{};
        for (int i = 0; i < 3; ++i)
            w[i] = (logs_[i].imag() - std::arg(point_ - s.puncture(i))) / two_pi;
        return w;
    }

    /// Continue along the straight segment point() -> target.
    BranchState continue_to(const SphereData& s, cplx target) const {
        BranchState out = *this;
        out.advance(s, target);
        return out;
    }

    double max_offset_abs(const BranchState& other) const {
        double m = 0;
        for (int i = 0; i < 3; ++i)
            m = std::max(m, std::abs(logs_[i] - other.logs_[i]));
        return m;
    }

private:
    void advance(const SphereData& s, cplx target) {
        // iterative bisection: try the full remaining move, halve on failure
        const double total = std::abs(target - point_);
        if (total == 0.0) return;
        const double min_step = std::max(1e-14, 1e-14 * total);
        cplx cur = point_;
        double t = 0.0; // progress along [0,1]
        double dt = 1.0;
        while (t < 1.0) {
            dt = std::min(dt, 1.0 - t);
            cplx next = point_ + (t + dt) * (target - point_);
            bool ok = true;
            std::array<cplx, 3> inc;
            for (int i = 0; i < 3; ++i) {
                cplx a = cur - s.puncture(i), b = next - s.puncture(i);
                if (std::abs(b) < 1e-13 || std::abs(a) < 1e-13) { ok = false; break; }
                cplx r = b / a;
                if (std::abs(std::arg(r)) > pi / 4.0 || std::abs(r - 1.0) > 0.6) { ok = false; break; }
                inc[i] = std::log(r);
            }
            if (!ok) {
                dt *= 0.5;
                if (dt * total < min_step)
                    throw branch_error("continuation segment passes through a puncture");
                continue;
            }
            for (int i = 0; i < 3; ++i) logs_[i] += inc[i];
            cur = next;
            t += dt;
            dt *= 2.0;
        }
        point_ = target;
    }

    cplx point_;
    std::array<cplx, 3> logs_;
};

/// P(z) evaluated on the branch described by `branch`, which must have
/// been continued to z beforehand.
inline cplx eval_P(const SphereData& s, cplx z, const BranchState& branch) {
    for (int i = 0; i < 3; ++i)
        if (std::abs(z - s.puncture(i)) < 1e-13)
            throw domain_error("eval_P at a puncture");
    if (std::abs(branch.point() - z) > 1e-12 * (1.0 + std::abs(z)))
        throw branch_error("branch state not continued to the evaluation point");
    cplx lg = s.norm_log();
    for (int i = 0; i < 3; ++i) lg -= (2.0 - s.exponent(i)) * branch.log_rel(i);
    return std::exp(lg);
}

/// Principal-branch evaluation (fresh branch state at z).
inline cplx eval_P_principal(const SphereData& s, cplx z) {
    return eval_P(s, z, BranchState(s, z));
}

/// The anchored germ of P continued to `target`: principal logs at the
/// branch anchor, then straight-segment continuation (with deterministic
/// elbow fallbacks if the straight segment clips a puncture).
inline BranchState anchored_branch(const SphereData& s, cplx target) {
    BranchState germ(s, s.branch_anchor());
    try {
        return germ.continue_to(s, target);
    } catch (const branch_error&) {
    }
    double step = 0.35 * s.min_separation();
    for (int k = 0; k < 6; ++k) {
        cplx elbow = 0.5 * (s.branch_anchor() + target) +
                     step * std::exp(cplx{0.0, 0.9 + 1.1 * k});
        try {
            return germ.continue_to(s, elbow).continue_to(s, target);
        } catch (const branch_error&) {
        }
    }
    throw branch_error("cannot continue the anchored germ to the requested point");
}

/// Push the sphere forward by a Moebius map. The stored normalization is
/// corrected so that P'(m(z)) m'(z)^2 = P(z) holds exactly near the
/// anchor (puncture centroid), i.e. covariance as a quadratic
/// differential is exact and not merely up to a phase.
inline SphereData mobius_pushforward(const SphereData& s, const Mobius& m) {
    if (std::abs(m.det()) < 1e-14) throw domain_error("mobius_pushforward: degenerate map");
    std::array<cplx, 3> w;
    for (int i = 0; i < 3; ++i) {
        cplx den = m.m10 * s.puncture(i) + m.m11;
        if (std::abs(den) < 1e-9)
            throw chart_error("puncture mapped to infinity; re-chart first");
        w[i] = m(s.puncture(i));
    }
    SphereData pushed(w[0], w[1], w[2], s.exponent(0), s.exponent(1), s.regime());

    // anchor: centroid of the punctures, nudged if it is degenerate
    cplx anchor = (s.puncture(0) + s.puncture(1) + s.puncture(2)) / 3.0;
    auto usable = [&](cplx p) {
        if (std::abs(m.m10 * p + m.m11) < 1e-9) return false;
        for (int i = 0; i < 3; ++i) {
            if (std::abs(p - s.puncture(i)) < 1e-6) return false;
            if (std::abs(m(p) - w[i]) < 1e-6) return false;
        }
        return true;
    };
    for (int k = 0; !usable(anchor); ++k) {
        if (k > 8) throw chart_error("no usable covariance anchor for this map");
        anchor += cplx{0.137, 0.311};
    }
    cplx lhs = eval_P_principal(s, anchor);
    cplx rhs = eval_P_principal(pushed, m(anchor)) * sqr(m.deriv(anchor));
    cplx corr = std::log(lhs / rhs); // pure phase up to rounding
    return SphereData(w[0], w[1], w[2], s.exponent(0), s.exponent(1), s.regime(),
                      pushed.norm_log_offset() + corr);
}

// ---- serialization ----------------------------------------------------

inline nlohmann::json to_json(cplx z) { return nlohmann::json::array({z.real(), z.imag()}); }
inline cplx cplx_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2) throw format_error("complex value must be [re, im]");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline nlohmann::json to_json(const SphereData& s) {
    return {
        {"z", {to_json(s.puncture(0)), to_json(s.puncture(1)), to_json(s.puncture(2))}},
        {"a", {s.exponent(0), s.exponent(1), s.exponent(2)}},
        {"regime", to_string(s.regime())},
        {"norm_log_offset", to_json(s.norm_log_offset())},
    };
}

inline SphereData sphere_from_json(const nlohmann::json& j) {
    auto reg = j.at("regime").get<std::string>();
    Regime r;
    if (reg == "symmetric") r = Regime::symmetric;
    else if (reg == "unitary") r = Regime::unitary;
    else throw format_error("unknown regime '" + reg + "'");
    cplx off{0.0};
    if (j.contains("norm_log_offset")) off = cplx_from_json(j.at("norm_log_offset"));
    auto& zs = j.at("z");
    auto& as = j.at("a");
    if (zs.size() != 3 || as.size() < 2) throw format_error("sphere record needs 3 punctures, >=2 exponents");
    return SphereData(cplx_from_json(zs[0]), cplx_from_json(zs[1]), cplx_from_json(zs[2]),
                      as[0].get<double>(), as[1].get<double>(), r, off);
}

} // namespace monolab

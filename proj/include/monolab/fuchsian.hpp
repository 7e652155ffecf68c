#pragma once

#include "monolab/sphere.hpp"
#include "monolab/linalg.hpp"

#include <vector>

namespace monolab {

/// One monodromy-free candidate puncture: position x and the residue c of
/// T at x. The double-pole strength at every apparent puncture is fixed
/// to 2 (Frobenius exponents -1 and 2).
struct ApparentPair {
    cplx x;
    cplx c;
};

/// T_L(z) = sum_i [ delta_i/(z-z_i)^2 + c_i/(z-z_i) ]
///        + sum_a [ 2/(z-x_a)^2 + c_a/(z-x_a) ].
///
/// z = infinity must be a regular point, i.e. T = O(z^-4). Expanding at
/// large z gives three linear conditions on the residues,
///   sum r_p = 0,  sum (r_p p + d_p) = 0,  sum (r_p p^2 + 2 d_p p) = 0
/// (sums over all poles, d_p the double-pole strengths), which determine
/// c_1, c_2, c_3 from the apparent data. The constructor solves them.
class FuchsianOperator {
public:
    FuchsianOperator(SphereData sphere, std::array<double, 3> delta,
                     std::vector<ApparentPair> apparent = {})
        : sphere_(std::move(sphere)), delta_(delta), apparent_(std::move(apparent)) {
        validate_positions();
        solve_residues();
    }

    const SphereData& sphere() const { return sphere_; }
    const std::array<double, 3>& delta() const { return delta_; }
    const std::array<cplx, 3>& residues() const { return residues_; }
    const std::vector<ApparentPair>& apparent() const { return apparent_; }
    std::size_t L() const { return apparent_.size(); }

    /// Distance from z to the nearest declared singular location.
    double dist_to_poles(cplx z) const {
        double d = 1e300;
        for (int i = 0; i < 3; ++i) d = std::min(d, std::abs(z - sphere_.puncture(i)));
        for (auto& ap : apparent_) d = std::min(d, std::abs(z - ap.x));
        return d;
    }

    cplx eval_T(cplx z) const {
        if (dist_to_poles(z) < 1e-12)
            throw domain_error("eval_T at a pole");
        cplx t{0.0};
        for (int i = 0; i < 3; ++i) {
            cplx d = z - sphere_.puncture(i);
            t += delta_[i] / (d * d) + residues_[i] / d;
        }
        for (auto& ap : apparent_) {
            cplx d = z - ap.x;
            t += 2.0 / (d * d) + ap.c / d;
        }
        return t;
    }

    /// d/dz of T, used by local expansions.
    cplx eval_dT(cplx z) const {
        cplx t{0.0};
        for (int i = 0; i < 3; ++i) {
            cplx d = z - sphere_.puncture(i);
            t += -2.0 * delta_[i] / (d * d * d) - residues_[i] / (d * d);
        }
        for (auto& ap : apparent_) {
            cplx d = z - ap.x;
            t += -4.0 / (d * d * d) - ap.c / (d * d);
        }
        return t;
    }

private:
    void validate_positions() const {
        for (std::size_t a = 0; a < apparent_.size(); ++a) {
            for (int i = 0; i < 3; ++i)
                if (std::abs(apparent_[a].x - sphere_.puncture(i)) < 1e-9)
                    throw domain_error("apparent puncture collides with a primary puncture");
            for (std::size_t b = a + 1; b < apparent_.size(); ++b)
                if (std::abs(apparent_[a].x - apparent_[b].x) < 1e-9)
                    throw domain_error("apparent punctures collide");
        }
    }

    void solve_residues() {
        // Vandermonde system in the primary punctures.
        const auto& z = sphere_.punctures();
        cplx b0{0.0}, b1{0.0}, b2{0.0};
        double dsum = delta_[0] + delta_[1] + delta_[2];
        cplx dzsum = delta_[0] * z[0] + delta_[1] * z[1] + delta_[2] * z[2];
        for (auto& ap : apparent_) {
            b0 -= ap.c;
            b1 -= ap.c * ap.x;
            b2 -= ap.c * ap.x * ap.x;
        }
        b1 -= dsum + 2.0 * static_cast<double>(apparent_.size());
        cplx xsum{0.0};
        for (auto& ap : apparent_) xsum += ap.x;
        b2 -= 2.0 * dzsum + 4.0 * xsum;

        std::vector<cplx> A = {1.0, 1.0, 1.0,
                               z[0], z[1], z[2],
                               z[0] * z[0], z[1] * z[1], z[2] * z[2]};
        std::vector<cplx> rhs = {b0, b1, b2};
        auto c = lu_solve(std::move(A), std::move(rhs), 3);
        residues_ = {c[0], c[1], c[2]};
    }

    SphereData sphere_;
    std::array<double, 3> delta_;
    std::vector<ApparentPair> apparent_;
    std::array<cplx, 3> residues_;
};

inline nlohmann::json to_json(const FuchsianOperator& op) {
    nlohmann::json ap = nlohmann::json::array();
    for (auto& p : op.apparent())
        ap.push_back({{"x", to_json(p.x)}, {"c", to_json(p.c)}});
    return {
        {"sphere", to_json(op.sphere())},
        {"delta", {op.delta()[0], op.delta()[1], op.delta()[2]}},
        {"apparent", ap},
        // derived; stored for readability, recomputed on load
        {"residues", {to_json(op.residues()[0]), to_json(op.residues()[1]),
                      to_json(op.residues()[2])}},
    };
}

inline FuchsianOperator fuchsian_from_json(const nlohmann::json& j) {
    auto sphere = sphere_from_json(j.at("sphere"));
    auto& d = j.at("delta");
    if (d.size() != 3) throw format_error("delta must have 3 entries");
    std::array<double, 3> delta{d[0].get<double>(), d[1].get<double>(), d[2].get<double>()};
    std::vector<ApparentPair> ap;
    if (j.contains("apparent"))
        for (auto& p : j.at("apparent"))
            ap.push_back({cplx_from_json(p.at("x")), cplx_from_json(p.at("c"))});
    return FuchsianOperator(std::move(sphere), delta, std::move(ap));
}

} // namespace monolab

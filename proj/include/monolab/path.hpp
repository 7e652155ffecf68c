#pragma once

#include "monolab/sphere.hpp"

#include <variant>
#include <vector>

namespace monolab {

struct LineSeg {
    cplx from, to;
};

/// Circular arc center + radius, from angle phi0 sweeping by dphi
/// (signed; positive = counterclockwise).
struct ArcSeg {
    cplx center;
    double radius;
    double phi0;
    double dphi;
};

using Segment = std::variant<LineSeg, ArcSeg>;

inline cplx seg_start(const Segment& s) {
    if (auto* l = std::get_if<LineSeg>(&s)) return l->from;
    auto& a = std::get<ArcSeg>(s);
    return a.center + a.radius * std::exp(cplx{0.0, a.phi0});
}
inline cplx seg_end(const Segment& s) {
    if (auto* l = std::get_if<LineSeg>(&s)) return l->to;
    auto& a = std::get<ArcSeg>(s);
    return a.center + a.radius * std::exp(cplx{0.0, a.phi0 + a.dphi});
}
/// position at parameter t in [0,1]
inline cplx seg_point(const Segment& s, double t) {
    if (auto* l = std::get_if<LineSeg>(&s)) return l->from + t * (l->to - l->from);
    auto& a = std::get<ArcSeg>(s);
    return a.center + a.radius * std::exp(cplx{0.0, a.phi0 + t * a.dphi});
}
/// dz/dt at parameter t
inline cplx seg_velocity(const Segment& s, double t) {
    if (auto* l = std::get_if<LineSeg>(&s)) return l->to - l->from;
    auto& a = std::get<ArcSeg>(s);
    return cplx{0.0, a.dphi} * a.radius * std::exp(cplx{0.0, a.phi0 + t * a.dphi});
}
inline double seg_length(const Segment& s) {
    if (auto* l = std::get_if<LineSeg>(&s)) return std::abs(l->to - l->from);
    auto& a = std::get<ArcSeg>(s);
    return std::abs(a.dphi) * a.radius;
}

inline double point_to_segment_dist(const Segment& s, cplx p) {
    if (auto* l = std::get_if<LineSeg>(&s)) {
        cplx d = l->to - l->from;
        double len2 = std::norm(d);
        if (len2 == 0.0) return std::abs(p - l->from);
        double t = std::clamp(((p - l->from) * std::conj(d)).real() / len2, 0.0, 1.0);
        return std::abs(p - (l->from + t * d));
    }
    auto& a = std::get<ArcSeg>(s);
    // angle of p relative to the swept sector
    cplx rel = p - a.center;
    double ang = std::arg(rel) - a.phi0;
    double sweep = a.dphi;
    if (sweep < 0) { ang = -ang; sweep = -sweep; }
    ang = std::fmod(ang, two_pi);
    if (ang < 0) ang += two_pi;
    if (ang <= sweep)
        return std::abs(std::abs(rel) - a.radius);
    return std::min(std::abs(p - seg_start(s)), std::abs(p - seg_end(s)));
}

/// A contour made of contiguous analytic arcs. Transport happens segment
/// by segment; windings and branch bookkeeping are derived from the same
/// geometry, so there is a single source of truth for "where the path is".
struct PathSpec {
    cplx base{0.0};
    std::vector<Segment> segments;
    bool loop = false;

    void validate_geometry() const {
        for (std::size_t k = 0; k < segments.size(); ++k) {
            cplx want = (k == 0) ? base : seg_end(segments[k - 1]);
            if (std::abs(seg_start(segments[k]) - want) > 1e-9)
                throw config_error("path segments are not contiguous");
        }
        if (loop && !segments.empty() &&
            std::abs(seg_end(segments.back()) - base) > 1e-9)
            throw config_error("closed path does not return to base");
    }

    /// minimal distance of the whole path to point p
    double distance_to(cplx p) const {
        double d = 1e300;
        for (auto& s : segments) d = std::min(d, point_to_segment_dist(s, p));
        return d;
    }

    void check_clearance(const std::vector<cplx>& points, double r_min) const {
        for (auto& p : points)
            if (distance_to(p) < r_min)
                throw config_error("path passes within r_min of a singular point");
    }

    PathSpec reversed() const {
        PathSpec r;
        r.loop = loop;
        r.base = segments.empty() ? base : seg_end(segments.back());
        for (auto it = segments.rbegin(); it != segments.rend(); ++it) {
            if (auto* l = std::get_if<LineSeg>(&*it))
                r.segments.push_back(LineSeg{l->to, l->from});
            else {
                auto a = std::get<ArcSeg>(*it);
                r.segments.push_back(ArcSeg{a.center, a.radius, a.phi0 + a.dphi, -a.dphi});
            }
        }
        return r;
    }

    /// p1.then(p2): first traverse *this, then tail.
    PathSpec then(const PathSpec& tail) const {
        PathSpec r = *this;
        r.loop = false;
        for (auto& s : tail.segments) r.segments.push_back(s);
        r.validate_geometry();
        if (!r.segments.empty() && std::abs(seg_end(r.segments.back()) - r.base) < 1e-9)
            r.loop = true;
        return r;
    }

    /// winding number around p (path must be closed for an integer answer)
    double winding_number(cplx p) const {
        double total = 0.0;
        for (auto& s : segments) {
            // accumulate argument change with adaptive sampling
            int n = std::max(8, static_cast<int>(seg_length(s) / 0.05));
            cplx prev = seg_point(s, 0.0) - p;
            for (int k = 1; k <= n; ++k) {
                cplx cur = seg_point(s, static_cast<double>(k) / n) - p;
                total += std::arg(cur / prev);
                prev = cur;
            }
        }
        return total / two_pi;
    }
};

/// base-anchored simple loop around `center`: approach, full circle
/// (counterclockwise for orientation=+1), return.
inline PathSpec simple_loop(cplx base, cplx center, double radius, int orientation = +1) {
    if (std::abs(base - center) <= radius)
        throw config_error("simple_loop: base inside the loop circle");
    PathSpec p;
    p.base = base;
    p.loop = true;
    cplx dir = (base - center) / std::abs(base - center);
    cplx s = center + radius * dir;
    double phi0 = std::arg(dir);
    p.segments.push_back(LineSeg{base, s});
    p.segments.push_back(ArcSeg{center, radius, phi0, orientation * two_pi});
    p.segments.push_back(LineSeg{s, base});
    p.validate_geometry();
    return p;
}

/// Like simple_loop but routed through a waypoint on the approach (used
/// to deform contours past chosen points, e.g. to sweep across a
/// monodromy-free puncture).
inline PathSpec simple_loop_via(cplx base, cplx center, double radius, cplx waypoint,
                                int orientation = +1) {
    if (std::abs(base - center) <= radius || std::abs(waypoint - center) <= radius)
        throw config_error("simple_loop_via: base or waypoint inside the loop circle");
    PathSpec p;
    p.base = base;
    p.loop = true;
    cplx dir = (waypoint - center) / std::abs(waypoint - center);
    cplx s = center + radius * dir;
    p.segments.push_back(LineSeg{base, waypoint});
    p.segments.push_back(LineSeg{waypoint, s});
    p.segments.push_back(ArcSeg{center, radius, std::arg(dir), orientation * two_pi});
    p.segments.push_back(LineSeg{s, waypoint});
    p.segments.push_back(LineSeg{waypoint, base});
    p.validate_geometry();
    return p;
}

/// Commutator contour gamma_i gamma_j gamma_i^-1 gamma_j^-1 built from
/// base-anchored simple loops. Total winding around every puncture is
/// zero, so branch-tracked weights return to their initial branch.
inline PathSpec pochhammer_loop(const SphereData& sphere, int i, int j, cplx base,
                                double radius = 0.0) {
    if (i == j) throw config_error("pochhammer_loop: need two distinct punctures");
    if (i < 0 || i > 2 || j < 0 || j > 2) throw config_error("pochhammer_loop: index out of range");
    double minsep = sphere.min_separation();
    if (radius <= 0.0) radius = 0.1 * minsep;
    for (int k = 0; k < 3; ++k)
        if (std::abs(base - sphere.puncture(k)) < std::max(2.0 * radius, 0.05 * minsep))
            throw config_error("pochhammer_loop: base too close to a puncture");
    PathSpec gi = simple_loop(base, sphere.puncture(i), radius, +1);
    PathSpec gj = simple_loop(base, sphere.puncture(j), radius, +1);
    return gi.then(gj).then(gi.reversed()).then(gj.reversed());
}

/// Pochhammer contour whose first simple loop is routed through a
/// waypoint; homotopic deformations of this kind must leave the Wilson
/// trace unchanged when only monodromy-free punctures are swept.
inline PathSpec pochhammer_loop_via(const SphereData& sphere, int i, int j, cplx base,
                                    double radius, cplx waypoint) {
    if (i == j) throw config_error("pochhammer_loop_via: need two distinct punctures");
    PathSpec gi = simple_loop_via(base, sphere.puncture(i), radius, waypoint, +1);
    PathSpec gj = simple_loop(base, sphere.puncture(j), radius, +1);
    return gi.then(gj).then(gi.reversed()).then(gj.reversed());
}

// ---- serialization ----------------------------------------------------

inline nlohmann::json to_json(const PathSpec& p) {
    nlohmann::json segs = nlohmann::json::array();
    for (auto& s : p.segments) {
        if (auto* l = std::get_if<LineSeg>(&s))
            segs.push_back({{"type", "line"}, {"from", to_json(l->from)}, {"to", to_json(l->to)}});
        else {
            auto& a = std::get<ArcSeg>(s);
            segs.push_back({{"type", "arc"}, {"center", to_json(a.center)},
                            {"radius", a.radius}, {"phi0", a.phi0}, {"dphi", a.dphi}});
        }
    }
    return {{"base", to_json(p.base)}, {"loop", p.loop}, {"segments", segs}};
}

inline PathSpec path_from_json(const nlohmann::json& j) {
    PathSpec p;
    p.base = cplx_from_json(j.at("base"));
    p.loop = j.at("loop").get<bool>();
    for (auto& s : j.at("segments")) {
        auto type = s.at("type").get<std::string>();
        if (type == "line")
            p.segments.push_back(LineSeg{cplx_from_json(s.at("from")), cplx_from_json(s.at("to"))});
        else if (type == "arc")
            p.segments.push_back(ArcSeg{cplx_from_json(s.at("center")), s.at("radius").get<double>(),
                                        s.at("phi0").get<double>(), s.at("dphi").get<double>()});
        else
            throw format_error("unknown segment type '" + type + "'");
    }
    p.validate_geometry();
    return p;
}

} // namespace monolab

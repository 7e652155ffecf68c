#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <cmath>
#include <vector>

namespace monolab {

using cplx = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846264338327950288;
inline constexpr double two_pi = 2.0 * pi;

/// Error taxonomy shared by all modules. Everything derives from
/// monolab::error so callers can catch the whole family at once.
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

struct domain_error : error {
    explicit domain_error(const std::string& msg) : error("domain error: " + msg) {}
};
struct branch_error : error {
    explicit branch_error(const std::string& msg) : error("branch error: " + msg) {}
};
struct chart_error : error {
    explicit chart_error(const std::string& msg) : error("chart error: " + msg) {}
};
struct config_error : error {
    explicit config_error(const std::string& msg) : error("configuration error: " + msg) {}
};
struct integration_error : error {
    explicit integration_error(const std::string& msg) : error("integration error: " + msg) {}
};
struct core_error : error {
    explicit core_error(const std::string& msg) : error("core error: " + msg) {}
};
struct format_error : error {
    explicit format_error(const std::string& msg) : error("format error: " + msg) {}
};
struct convergence_error : error {
    explicit convergence_error(const std::string& msg) : error("no convergence: " + msg) {}
};

inline double sqr(double x) { return x * x; }
inline cplx sqr(cplx x) { return x * x; }

inline bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }
inline bool near(cplx a, cplx b, double tol) { return std::abs(a - b) <= tol; }

/// Relative distance used throughout the scan/deformation checks.
inline double rel_diff(cplx a, cplx b) { return std::abs(a - b) / (1.0 + std::abs(a)); }

} // namespace monolab

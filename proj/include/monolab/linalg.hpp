#pragma once

#include "monolab/common.hpp"

#include <array>
#include <algorithm>
#include <cstddef>

namespace monolab {

/// 2x2 complex matrix, the workhorse of all transport code.
struct Mat2 {
    cplx a{1.0}, b{0.0}, c{0.0}, d{1.0}; // [[a,b],[c,d]]

    static Mat2 identity() { return {}; }
    static Mat2 zero() { return {cplx{0}, cplx{0}, cplx{0}, cplx{0}}; }

    cplx det() const { return a * d - b * c; }
    cplx trace() const { return a + d; }

    Mat2 operator*(const Mat2& o) const {
        return {a * o.a + b * o.c, a * o.b + b * o.d,
                c * o.a + d * o.c, c * o.b + d * o.d};
    }
    Mat2 operator+(const Mat2& o) const { return {a + o.a, b + o.b, c + o.c, d + o.d}; }
    Mat2 operator-(const Mat2& o) const { return {a - o.a, b - o.b, c - o.c, d - o.d}; }
    Mat2 operator*(cplx s) const { return {a * s, b * s, c * s, d * s}; }

    Mat2 inverse() const {
        cplx dt = det();
        if (std::abs(dt) == 0.0) throw domain_error("Mat2::inverse of singular matrix");
        cplx i = 1.0 / dt;
        return {d * i, -b * i, -c * i, a * i};
    }

    /// max-abs over entries
    double norm_inf() const {
        return std::max(std::max(std::abs(a), std::abs(b)),
                        std::max(std::abs(c), std::abs(d)));
    }
};

inline Mat2 operator*(cplx s, const Mat2& m) { return m * s; }

inline double dist_inf(const Mat2& x, const Mat2& y) { return (x - y).norm_inf(); }

/// Dense complex LU solve with partial pivoting, for the small systems that
/// show up here (3x3 accessory residues, 2Lx2L Newton steps, charge fits).
/// A is row-major n*n and is destroyed; b is overwritten with the solution.
/// Returns an estimate of the reciprocal pivot ratio (min|piv|/max|piv|),
/// a cheap conditioning signal.
inline double lu_solve_inplace(std::vector<cplx>& A, std::vector<cplx>& b, std::size_t n) {
    if (A.size() != n * n || b.size() != n) throw domain_error("lu_solve: shape mismatch");
    double piv_min = 0.0, piv_max = 0.0;
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        double best = std::abs(A[perm[k] * n + k]);
        for (std::size_t i = k + 1; i < n; ++i) {
            double v = std::abs(A[perm[i] * n + k]);
            if (v > best) { best = v; p = i; }
        }
        if (best == 0.0) throw domain_error("lu_solve: singular matrix");
        std::swap(perm[k], perm[p]);
        piv_max = std::max(piv_max, best);
        piv_min = (k == 0) ? best : std::min(piv_min, best);

        const cplx pivot = A[perm[k] * n + k];
        for (std::size_t i = k + 1; i < n; ++i) {
            cplx f = A[perm[i] * n + k] / pivot;
            A[perm[i] * n + k] = f;
            for (std::size_t j = k + 1; j < n; ++j)
                A[perm[i] * n + j] -= f * A[perm[k] * n + j];
            b[perm[i]] -= f * b[perm[k]];
        }
    }
    // back substitution
    std::vector<cplx> x(n);
    for (std::size_t kk = n; kk-- > 0;) {
        cplx s = b[perm[kk]];
        for (std::size_t j = kk + 1; j < n; ++j) s -= A[perm[kk] * n + j] * x[j];
        x[kk] = s / A[perm[kk] * n + kk];
    }
    b = std::move(x);
    return piv_max > 0.0 ? piv_min / piv_max : 0.0;
}

/// Solve A x = b without destroying inputs.
inline std::vector<cplx> lu_solve(std::vector<cplx> A, std::vector<cplx> b, std::size_t n,
                                  double* pivot_ratio = nullptr) {
    double r = lu_solve_inplace(A, b, n);
    if (pivot_ratio) *pivot_ratio = r;
    return b;
}

/// Least squares for complex samples on a real design matrix
/// (normal equations; the bases used here are tiny and column-scaled
/// by the caller). Returns coefficients; cond_out gets a Frobenius
/// condition estimate of the scaled normal matrix.
inline std::vector<cplx> lsq_real_basis(const std::vector<std::vector<double>>& cols,
                                        const std::vector<cplx>& rhs,
                                        double* cond_out = nullptr) {
    const std::size_t m = rhs.size(), n = cols.size();
    for (auto& c : cols) if (c.size() != m) throw domain_error("lsq: ragged design matrix");
    // column scaling
    std::vector<double> scale(n, 1.0);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (double v : cols[j]) s += v * v;
        scale[j] = s > 0 ? 1.0 / std::sqrt(s) : 1.0;
    }
    std::vector<cplx> G(n * n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < m; ++k) s += cols[i][k] * cols[j][k];
            G[i * n + j] = s * scale[i] * scale[j];
        }
        cplx s = 0;
        for (std::size_t k = 0; k < m; ++k) s += cols[i][k] * rhs[k];
        g[i] = s * scale[i];
    }
    if (cond_out) {
        // ||G||_F * ||G^-1||_F via n solves against unit vectors
        double nf = 0;
        for (auto& v : G) nf += std::norm(v);
        double nif = 0;
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<cplx> e(n, cplx{0});
            e[j] = 1.0;
            auto x = lu_solve(G, e, n);
            for (auto& v : x) nif += std::norm(v);
        }
        *cond_out = std::sqrt(nf) * std::sqrt(nif);
    }
    auto coef = lu_solve(std::move(G), std::move(g), n);
    for (std::size_t j = 0; j < n; ++j) coef[j] *= scale[j];
    return coef;
}

} // namespace monolab

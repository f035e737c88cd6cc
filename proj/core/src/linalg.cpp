#include "vdc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace vdc {

namespace {

// One-sided (Hestenes) Jacobi on the columns of b (m×n, m >= n), stored
// column-major. Rotations are accumulated into v so that b_in = u * diag(s) * vᵀ
// holds at convergence. Chosen over bidiagonalization for its simplicity and
// high relative accuracy at the small sizes this toolkit works with.
struct ColumnMajor {
    std::size_t m, n;
    std::vector<double> cols;  // n columns of length m

    double* col(std::size_t j) { return cols.data() + j * m; }
    const double* col(std::size_t j) const { return cols.data() + j * m; }
};

double col_dot(const ColumnMajor& b, std::size_t p, std::size_t q) {
    const double* cp = b.col(p);
    const double* cq = b.col(q);
    double s = 0.0;
    for (std::size_t i = 0; i < b.m; ++i) s += cp[i] * cq[i];
    return s;
}

void rotate_cols(double* cp, double* cq, std::size_t m, double c, double s) {
    for (std::size_t i = 0; i < m; ++i) {
        const double vp = cp[i];
        const double vq = cq[i];
        cp[i] = c * vp - s * vq;
        cq[i] = s * vp + c * vq;
    }
}

struct JacobiOutput {
    Tensor u;  // m×n orthonormal columns
    std::vector<double> s;
    Tensor v;  // n×n orthonormal
};

JacobiOutput jacobi_svd_tall(const Tensor& a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();

    ColumnMajor b{m, n, std::vector<double>(m * n)};
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) b.col(j)[i] = a(i, j);
    ColumnMajor v{n, n, std::vector<double>(n * n, 0.0)};
    for (std::size_t j = 0; j < n; ++j) v.col(j)[j] = 1.0;

    constexpr double kTol = 1e-15;
    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double app = col_dot(b, p, p);
                const double aqq = col_dot(b, q, q);
                const double apq = col_dot(b, p, q);
                if (std::fabs(apq) <= kTol * std::sqrt(app) * std::sqrt(aqq)) continue;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t =
                    std::copysign(1.0, zeta) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate_cols(b.col(p), b.col(q), m, c, s);
                rotate_cols(v.col(p), v.col(q), n, c, s);
                rotated = true;
            }
        }
        if (!rotated) break;
    }

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(col_dot(b, j, j));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    JacobiOutput out{Tensor({m, n}), std::vector<double>(n), Tensor({n, n})};
    for (std::size_t jj = 0; jj < n; ++jj) {
        const std::size_t j = order[jj];
        out.s[jj] = norms[j];
        if (norms[j] > 0.0) {
            const double inv = 1.0 / norms[j];
            for (std::size_t i = 0; i < m; ++i) out.u(i, jj) = b.col(j)[i] * inv;
        }
        for (std::size_t i = 0; i < n; ++i) out.v(i, jj) = v.col(j)[i];
    }

    // Exactly-zero columns carry no direction; fill them with an orthonormal
    // completion so u always has orthonormal columns. Uses the canonical basis
    // vector with the largest residual after Gram-Schmidt.
    for (std::size_t jj = 0; jj < n; ++jj) {
        if (out.s[jj] > 0.0) continue;
        std::vector<double> best;
        double best_norm = -1.0;
        for (std::size_t basis = 0; basis < m; ++basis) {
            std::vector<double> cand(m, 0.0);
            cand[basis] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t k = 0; k < n; ++k) {
                    if (k == jj) continue;
                    if (out.s[k] == 0.0 && k > jj) continue;  // not yet filled
                    double proj = 0.0;
                    for (std::size_t i = 0; i < m; ++i) proj += cand[i] * out.u(i, k);
                    for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * out.u(i, k);
                }
            }
            double norm = 0.0;
            for (double x : cand) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > best_norm) {
                best_norm = norm;
                best = std::move(cand);
            }
            if (best_norm > 0.5) break;
        }
        for (std::size_t i = 0; i < m; ++i) out.u(i, jj) = best[i] / best_norm;
        out.s[jj] = 0.0;  // keep an exact zero rather than rounding dust
    }
    return out;
}

void fix_signs(Tensor& u, Tensor& v) {
    const std::size_t m = u.rows();
    const std::size_t r = u.cols();
    const std::size_t n = v.rows();
    for (std::size_t j = 0; j < r; ++j) {
        std::size_t arg = 0;
        double best = std::fabs(u(0, j));
        for (std::size_t i = 1; i < m; ++i) {
            const double mag = std::fabs(u(i, j));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (u(arg, j) < 0.0) {
            for (std::size_t i = 0; i < m; ++i) u(i, j) = -u(i, j);
            for (std::size_t i = 0; i < n; ++i) v(i, j) = -v(i, j);
        }
    }
}

}  // namespace

SvdResult svd(const Tensor& a) {
    require_rank(a, 2, "svd");
    require_finite(a, "svd");
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();

    SvdResult result;
    if (m >= n) {
        JacobiOutput j = jacobi_svd_tall(a);
        const std::size_t r = j.s.size();
        result.u = std::move(j.u);
        result.v = std::move(j.v);
        result.s = Tensor({r}, std::move(j.s));
    } else {
        JacobiOutput j = jacobi_svd_tall(transpose(a));
        const std::size_t r = j.s.size();
        result.u = std::move(j.v);  // a = (aᵀ)ᵀ = v s uᵀ
        result.v = std::move(j.u);
        result.s = Tensor({r}, std::move(j.s));
    }
    fix_signs(result.u, result.v);
    return result;
}

SvdResult svd_of_product(const Tensor& b, const Tensor& a) {
    require_rank(b, 2, "svd_of_product lhs");
    require_rank(a, 2, "svd_of_product rhs");
    if (b.cols() != a.rows()) throw ShapeError("svd_of_product: inner dimensions disagree");
    const std::size_t inner = b.cols();
    if (inner >= std::min(b.rows(), a.cols())) return svd(matmul(b, a));

    const SvdResult db = svd(b);  // b = U_b S_b V_bᵀ, r_b = inner
    const SvdResult da = svd(a);  // a = U_a S_a V_aᵀ, r_a = inner
    Tensor middle = matmul(transpose(db.v), da.u);
    for (std::size_t i = 0; i < inner; ++i)
        for (std::size_t j = 0; j < inner; ++j) middle(i, j) *= db.s(i) * da.s(j);
    const SvdResult dm = svd(middle);

    SvdResult out;
    out.u = matmul(db.u, dm.u);
    out.v = matmul(da.v, dm.v);
    out.s = dm.s;
    fix_signs(out.u, out.v);
    return out;
}

Tensor pinv(const SvdResult& d) {
    const std::size_t r = d.s.size();
    const double cutoff = 1e-12 *
                          static_cast<double>(std::max(d.u.rows(), d.v.rows())) *
                          (r > 0 ? d.s(0) : 0.0);
    Tensor inv_s({r, r});
    for (std::size_t i = 0; i < r; ++i) inv_s(i, i) = d.s(i) > cutoff ? 1.0 / d.s(i) : 0.0;
    return matmul(matmul(d.v, inv_s), transpose(d.u));
}

Tensor pinv(const Tensor& a) { return pinv(svd(a)); }

Tensor truncated_approx(const Tensor& a, std::size_t k) {
    require_rank(a, 2, "truncated_approx");
    const std::size_t r = std::min(a.rows(), a.cols());
    if (k < 1 || k > r) {
        throw ArgumentError("truncated_approx: k = " + std::to_string(k) +
                            " outside [1, " + std::to_string(r) + "]");
    }
    SvdResult d = svd(a);
    Tensor out({a.rows(), a.cols()});
    for (std::size_t t = 0; t < k; ++t) {
        const double s = d.s(t);
        for (std::size_t i = 0; i < a.rows(); ++i) {
            const double us = d.u(i, t) * s;
            for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) += us * d.v(j, t);
        }
    }
    return out;
}

Tensor solve_2x2(const Tensor& m, const Tensor& b) {
    require_rank(m, 2, "solve_2x2 matrix");
    if (m.rows() != 2 || m.cols() != 2) throw ShapeError("solve_2x2: matrix must be 2×2");
    if (b.rank() != 1 || b.size() != 2) throw ShapeError("solve_2x2: rhs must have length 2");
    require_finite(m, "solve_2x2 matrix");
    require_finite(b, "solve_2x2 rhs");

    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    const double norm2 = m(0, 0) * m(0, 0) + m(0, 1) * m(0, 1) + m(1, 0) * m(1, 0) +
                         m(1, 1) * m(1, 1);
    if (std::fabs(det) <= 1e-14 * norm2) {
        throw SingularError("solve_2x2: near-singular matrix, det = " + std::to_string(det),
                            det);
    }
    Tensor x({2});
    x(0) = (b(0) * m(1, 1) - b(1) * m(0, 1)) / det;
    x(1) = (m(0, 0) * b(1) - m(1, 0) * b(0)) / det;
    return x;
}

}  // namespace vdc

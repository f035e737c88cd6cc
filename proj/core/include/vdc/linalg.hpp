#pragma once

#include <cstddef>

#include "vdc/tensor.hpp"

namespace vdc {

/// Thin SVD of an m×n matrix: u is m×r, s holds the r singular values
/// (non-increasing, non-negative), v is n×r, with r = min(m, n).
/// Signs are fixed so the largest-magnitude entry of each u column is
/// positive (ties broken by lowest row index), making results deterministic.
struct SvdResult {
    Tensor u;
    Tensor s;
    Tensor v;
};

SvdResult svd(const Tensor& a);

/// SVD of the product b·a computed through the (usually much smaller) inner
/// dimension: decompose b and a separately, then the small middle matrix
/// S_b·(V_bᵀ·U_a)·S_a. Identical contract to svd(matmul(b, a)) but avoids
/// ever decomposing the large square product.
SvdResult svd_of_product(const Tensor& b, const Tensor& a);

/// Moore-Penrose pseudoinverse. Singular values below
/// 1e-12 * max(m, n) * max(s) are treated as zero.
Tensor pinv(const Tensor& a);

/// Pseudoinverse from an existing decomposition (same cutoff rule).
Tensor pinv(const SvdResult& d);

/// Best rank-k approximation U_k diag(S_k) V_kᵀ (Eckart-Young-Mirsky).
Tensor truncated_approx(const Tensor& a, std::size_t k);

/// Solve M x = b for a 2×2 M. Throws SingularError when
/// |det| <= 1e-14 * ||M||_F².
Tensor solve_2x2(const Tensor& m, const Tensor& b);

}  // namespace vdc

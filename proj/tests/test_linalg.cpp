#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "vdc/linalg.hpp"

using namespace vdc;
using test::random_matrix;
using test::random_rank_matrix;

namespace {

double reconstruction_error(const Tensor& a, const SvdResult& d) {
    Tensor rebuilt({a.rows(), a.cols()});
    for (std::size_t t = 0; t < d.s.size(); ++t)
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j)
                rebuilt(i, j) += d.u(i, t) * d.s(t) * d.v(j, t);
    return frobenius_norm(a - rebuilt) / std::max(1.0, frobenius_norm(a));
}

double orthonormality_error(const Tensor& m) {
    const Tensor gram = matmul(transpose(m), m);
    return max_abs_diff(gram, Tensor::identity(m.cols()));
}

}  // namespace

TEST_CASE("svd identity") {
    const SvdResult d = svd(Tensor::identity(3));
    for (std::size_t i = 0; i < 3; ++i) CHECK(d.s(i) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(max_abs_diff(d.u, Tensor::identity(3)) < 1e-12);
    CHECK(max_abs_diff(d.v, Tensor::identity(3)) < 1e-12);
}

TEST_CASE("svd diagonal with zero") {
    const SvdResult d = svd(Tensor::from_rows({{3.0, 0.0}, {0.0, 0.0}}));
    CHECK(d.s(0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(d.s(1) == doctest::Approx(0.0));
    CHECK(orthonormality_error(d.u) < 1e-10);
    CHECK(orthonormality_error(d.v) < 1e-10);
}

TEST_CASE("svd reconstructs random rectangular matrices") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 2 + rng.below(12);
        const std::size_t n = 2 + rng.below(12);
        const Tensor a = random_matrix(m, n, rng);
        const SvdResult d = svd(a);
        CHECK(reconstruction_error(a, d) < 1e-10);
        CHECK(orthonormality_error(d.u) < 1e-10);
        CHECK(orthonormality_error(d.v) < 1e-10);
        for (std::size_t i = 1; i < d.s.size(); ++i) CHECK(d.s(i - 1) >= d.s(i));
    }
}

TEST_CASE("svd 5x4 reconstruction example") {
    Rng rng(5);
    const Tensor a = random_matrix(5, 4, rng);
    CHECK(reconstruction_error(a, svd(a)) < 1e-10);
}

TEST_CASE("svd sign convention is deterministic") {
    Rng rng(3);
    const Tensor a = random_matrix(6, 4, rng);
    const SvdResult d1 = svd(a);
    const SvdResult d2 = svd(a);
    CHECK(max_abs_diff(d1.u, d2.u) == 0.0);
    CHECK(max_abs_diff(d1.v, d2.v) == 0.0);
    for (std::size_t j = 0; j < d1.u.cols(); ++j) {
        std::size_t arg = 0;
        double best = 0.0;
        for (std::size_t i = 0; i < d1.u.rows(); ++i) {
            if (std::fabs(d1.u(i, j)) > best) {
                best = std::fabs(d1.u(i, j));
                arg = i;
            }
        }
        CHECK(d1.u(arg, j) > 0.0);
    }
}

TEST_CASE("svd handles rank-deficient and degenerate shapes") {
    Rng rng(7);
    const Tensor low = random_rank_matrix(8, 6, 2, rng);
    const SvdResult d = svd(low);
    CHECK(reconstruction_error(low, d) < 1e-10);
    CHECK(orthonormality_error(d.u) < 1e-10);
    for (std::size_t i = 2; i < d.s.size(); ++i) CHECK(d.s(i) < 1e-10 * d.s(0));

    const SvdResult column = svd(Tensor({4, 1}, {1.0, 2.0, 3.0, 4.0}));
    CHECK(column.s(0) == doctest::Approx(std::sqrt(30.0)).epsilon(1e-14));
    const SvdResult row = svd(Tensor({1, 3}, {2.0, 0.0, 0.0}));
    CHECK(row.s(0) == doctest::Approx(2.0).epsilon(1e-14));

    const SvdResult zero = svd(Tensor({3, 3}));
    CHECK(orthonormality_error(zero.u) < 1e-10);
    for (std::size_t i = 0; i < 3; ++i) CHECK(zero.s(i) == 0.0);
}

TEST_CASE("svd_of_product matches the direct product decomposition") {
    Rng rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t inner = 2 + rng.below(5);
        const Tensor b = random_matrix(inner + 4 + rng.below(20), inner, rng);
        const Tensor a = random_matrix(inner, inner + 4 + rng.below(20), rng);
        const Tensor product = matmul(b, a);
        const SvdResult fast = svd_of_product(b, a);
        const SvdResult direct = svd(product);

        REQUIRE(fast.s.size() == std::min(b.cols(), std::min(b.rows(), a.cols())));
        for (std::size_t i = 0; i < fast.s.size(); ++i) {
            CHECK(fast.s(i) ==
                  doctest::Approx(direct.s(i)).epsilon(1e-10).scale(direct.s(0)));
        }
        Tensor rebuilt({product.rows(), product.cols()});
        for (std::size_t t = 0; t < fast.s.size(); ++t)
            for (std::size_t i = 0; i < product.rows(); ++i)
                for (std::size_t j = 0; j < product.cols(); ++j)
                    rebuilt(i, j) += fast.u(i, t) * fast.s(t) * fast.v(j, t);
        CHECK(frobenius_norm(product - rebuilt) / frobenius_norm(product) < 1e-10);
        CHECK(orthonormality_error(fast.u) < 1e-10);
        CHECK(orthonormality_error(fast.v) < 1e-10);
    }
    // Inner dimension not smaller than the outer ones: falls back to the
    // direct path and must agree bitwise.
    const Tensor b = random_matrix(3, 5, rng);
    const Tensor a = random_matrix(5, 4, rng);
    const SvdResult fast = svd_of_product(b, a);
    const SvdResult direct = svd(matmul(b, a));
    CHECK(max_abs_diff(fast.u, direct.u) == 0.0);
    CHECK(max_abs_diff(fast.s, direct.s) == 0.0);
}

TEST_CASE("svd input validation") {
    CHECK_THROWS_AS((void)svd(Tensor({2, 2, 2})), ShapeError);
    Tensor bad({2, 2}, {1.0, 2.0, std::nan(""), 4.0});
    CHECK_THROWS_AS((void)svd(bad), DomainError);
}

TEST_CASE("pinv identity and zero singular value") {
    CHECK(max_abs_diff(pinv(Tensor::identity(3)), Tensor::identity(3)) < 1e-12);
    const Tensor p = pinv(Tensor::from_rows({{2.0, 0.0}, {0.0, 0.0}}));
    CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-13));
    CHECK(p(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("pinv satisfies the Moore-Penrose conditions") {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t m = 2 + rng.below(8);
        const std::size_t n = 2 + rng.below(8);
        const Tensor a = random_matrix(m, n, rng);
        const Tensor a_pinv = pinv(a);
        CHECK(max_abs_diff(matmul(matmul(a, a_pinv), a), a) < 1e-9);
        CHECK(max_abs_diff(matmul(matmul(a_pinv, a), a_pinv), a_pinv) < 1e-9);
    }
}

TEST_CASE("pinv of full-row-rank 4x6 gives a right inverse") {
    Rng rng(17);
    const Tensor a = random_matrix(4, 6, rng);
    CHECK(max_abs_diff(matmul(a, pinv(a)), Tensor::identity(4)) < 1e-9);
}

TEST_CASE("pinv idempotence on full-rank matrices") {
    Rng rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor a = random_matrix(5, 5, rng);
        CHECK(max_abs_diff(pinv(pinv(a)), a) < 1e-8);
    }
}

TEST_CASE("truncated_approx lossless at true rank") {
    Rng rng(23);
    const Tensor a = random_rank_matrix(6, 5, 1, rng);
    CHECK(max_abs_diff(truncated_approx(a, 1), a) < 1e-9);
}

TEST_CASE("truncated_approx diagonal case") {
    const Tensor a = diag_matrix(std::vector<double>{3.0, 2.0, 1.0});
    const Tensor t = truncated_approx(a, 2);
    CHECK(max_abs_diff(t, diag_matrix(std::vector<double>{3.0, 2.0, 0.0})) < 1e-12);
    CHECK(frobenius_norm(a - t) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("truncated_approx residual equals the singular tail") {
    Rng rng(29);
    const Tensor a = random_matrix(6, 6, rng);
    const SvdResult d = svd(a);
    const double expected =
        std::sqrt(d.s(3) * d.s(3) + d.s(4) * d.s(4) + d.s(5) * d.s(5));
    CHECK(frobenius_norm(a - truncated_approx(a, 3)) ==
          doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("truncated_approx beats random rank-k matrices (Eckart-Young)") {
    Rng rng(31);
    const std::size_t k = 2;
    const Tensor a = random_matrix(7, 5, rng);
    const double best = frobenius_norm(a - truncated_approx(a, k));
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor b = random_rank_matrix(7, 5, k, rng);
        CHECK(best <= frobenius_norm(a - b) + 1e-9);
    }
}

TEST_CASE("truncated_approx rejects out-of-range ranks") {
    const Tensor a = Tensor::identity(3);
    CHECK_THROWS_AS((void)truncated_approx(a, 0), ArgumentError);
    CHECK_THROWS_AS((void)truncated_approx(a, 4), ArgumentError);
}

TEST_CASE("solve_2x2 identity and diagonal examples") {
    const Tensor b({2}, {3.0, 4.0});
    const Tensor x = solve_2x2(Tensor::identity(2), b);
    CHECK(x(0) == doctest::Approx(3.0));
    CHECK(x(1) == doctest::Approx(4.0));

    const Tensor d = solve_2x2(Tensor::from_rows({{2.0, 0.0}, {0.0, 4.0}}),
                               Tensor({2}, {2.0, 8.0}));
    CHECK(d(0) == doctest::Approx(1.0));
    CHECK(d(1) == doctest::Approx(2.0));
}

TEST_CASE("solve_2x2 residual on random well-conditioned systems") {
    Rng rng(37);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor m = random_matrix(2, 2, rng);
        m(0, 0) += 3.0;  // keep it away from singularity
        m(1, 1) += 3.0;
        const Tensor b({2}, {rng.normal(), rng.normal()});
        const Tensor x = solve_2x2(m, b);
        const double r0 = m(0, 0) * x(0) + m(0, 1) * x(1) - b(0);
        const double r1 = m(1, 0) * x(0) + m(1, 1) * x(1) - b(1);
        const double scale = std::max(1.0, std::fabs(b(0)) + std::fabs(b(1)));
        CHECK(std::fabs(r0) / scale < 1e-12);
        CHECK(std::fabs(r1) / scale < 1e-12);
    }
}

TEST_CASE("solve_2x2 reports near-singular systems") {
    const Tensor m = Tensor::from_rows({{1.0, 2.0}, {2.0, 4.0}});
    CHECK_THROWS_AS((void)solve_2x2(m, Tensor({2}, {1.0, 2.0})), SingularError);
    try {
        (void)solve_2x2(m, Tensor({2}, {1.0, 2.0}));
    } catch (const SingularError& e) {
        CHECK(e.det() == doctest::Approx(0.0));
    }
}

#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "vdc/flops.hpp"
#include "vdc/funnel.hpp"
#include "vdc/linalg.hpp"
#include "vdc/nn.hpp"

using namespace vdc;
using test::random_matrix;
using test::random_rank_matrix;
using test::random_tensor;

namespace {

Tensor effective_product(const LinearPair& pair, const FunnelPair& funnel) {
    return matmul(matmul(pair.w2, funnel.f2), matmul(funnel.f1, pair.w1));
}

double singular_tail_norm(const Tensor& product, std::size_t from) {
    const SvdResult d = svd(product);
    double acc = 0.0;
    for (std::size_t i = from; i < d.s.size(); ++i) acc += d.s(i) * d.s(i);
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("reduced width rounding rule") {
    CHECK(reduced_width(1.0, 8) == 8);
    CHECK(reduced_width(0.5, 8) == 4);
    CHECK(reduced_width(0.25, 8) == 2);
    CHECK(reduced_width(0.1, 4) == 1);
    CHECK(reduced_width(0.01, 64) == 1);
    // Strictly below c_inner whenever the factor is, wherever satisfiable.
    CHECK(reduced_width(0.9, 2) == 1);
    CHECK(reduced_width(0.75, 2) == 1);
    CHECK_THROWS_AS((void)reduced_width(0.0, 4), ArgumentError);
    CHECK_THROWS_AS((void)reduced_width(1.5, 4), ArgumentError);
}

TEST_CASE("csi_linear_pair is lossless at the true rank") {
    Rng rng(101);
    const Tensor w1 = random_rank_matrix(4, 6, 1, rng);
    const Tensor w2 = random_matrix(5, 4, rng);
    const LinearPair pair{w1, w2, Nonlinearity::relu};
    const FunnelPair funnel = csi_linear_pair(pair, 0.25);  // c' = 1
    REQUIRE(funnel.reduced_width() == 1);
    const Tensor target = matmul(w2, w1);
    CHECK(frobenius_norm(effective_product(pair, funnel) - target) <= 1e-9);
}

TEST_CASE("csi_linear_pair with fun_factor 1 reproduces the product") {
    Rng rng(103);
    const LinearPair pair{random_matrix(4, 6, rng), random_matrix(5, 4, rng),
                          Nonlinearity::silu};
    const FunnelPair funnel = csi_linear_pair(pair, 1.0);
    const Tensor target = matmul(pair.w2, pair.w1);
    CHECK(frobenius_norm(effective_product(pair, funnel) - target) /
              frobenius_norm(target) <
          1e-9);
}

TEST_CASE("csi_linear_pair residual equals the truncated-SVD tail") {
    Rng rng(107);
    const LinearPair pair{random_matrix(4, 6, rng), random_matrix(5, 4, rng),
                          Nonlinearity::silu};
    const FunnelPair funnel = csi_linear_pair(pair, 0.5);  // c' = 2
    REQUIRE(funnel.reduced_width() == 2);
    const Tensor product = matmul(pair.w2, pair.w1);
    const double residual = frobenius_norm(effective_product(pair, funnel) - product);
    const double expected = singular_tail_norm(product, 2);
    CHECK(residual == doctest::Approx(expected).epsilon(1e-8));
}

TEST_CASE("csi effective matrix equals truncated_approx across fun-factors") {
    Rng rng(109);
    for (const double ff : {0.25, 0.5, 0.75, 1.0}) {
        const LinearPair pair{random_matrix(8, 12, rng), random_matrix(10, 8, rng),
                              Nonlinearity::silu};
        const FunnelPair funnel = csi_linear_pair(pair, ff);
        const Tensor product = matmul(pair.w2, pair.w1);
        const Tensor truncated = truncated_approx(product, funnel.reduced_width());
        const double rel = frobenius_norm(effective_product(pair, funnel) - truncated) /
                           std::max(1.0, frobenius_norm(truncated));
        CHECK(rel < 1e-8);
    }
}

TEST_CASE("csi_attention_qk with identity projections preserves similarity") {
    const AttentionProjections proj{Tensor::identity(4), Tensor::identity(4),
                                    Tensor::identity(4), Tensor::identity(4)};
    const FunnelPair funnel = csi_attention_qk(proj, 1.0);
    Rng rng(113);
    const Tensor x = random_matrix(6, 4, rng);
    CHECK(max_abs_diff(attention_logits(proj, x, &funnel), attention_logits(proj, x)) <
          1e-9);
}

TEST_CASE("csi_attention_qk preserves logits when c' covers the bilinear rank") {
    Rng rng(127);
    AttentionProjections proj;
    proj.wq = random_matrix(8, 4, rng);
    proj.wk = random_matrix(8, 4, rng);
    proj.wv = random_matrix(8, 4, rng);
    proj.wo = random_matrix(4, 8, rng);
    const FunnelPair funnel = csi_attention_qk(proj, 1.0);  // c' = 4 = rank(wq wkᵀ)
    const Tensor x = random_matrix(5, 8, rng);
    CHECK(max_abs_diff(attention_logits(proj, x, &funnel), attention_logits(proj, x)) <
          1e-8);
}

TEST_CASE("csi_attention_qk matches the rank-truncated bilinear matrix") {
    Rng rng(131);
    AttentionProjections proj;
    proj.wq = random_matrix(8, 4, rng);
    proj.wk = random_matrix(8, 4, rng);
    proj.wv = random_matrix(8, 4, rng);
    proj.wo = random_matrix(4, 8, rng);
    const FunnelPair funnel = csi_attention_qk(proj, 0.5);  // c' = 2
    // Adapted similarity wq·Fq·Fkᵀ·wkᵀ against the rank-2 truncation.
    const Tensor adapted = matmul(matmul(proj.wq, funnel.f2),
                                  matmul(funnel.f1, transpose(proj.wk)));
    const Tensor truncated = truncated_approx(matmul(proj.wq, transpose(proj.wk)), 2);
    CHECK(frobenius_norm(adapted - truncated) / frobenius_norm(truncated) < 1e-8);
}

TEST_CASE("csi_value_output exact at full width and at the true rank") {
    Rng rng(137);
    AttentionProjections proj;
    proj.wq = random_matrix(6, 4, rng);
    proj.wk = random_matrix(6, 4, rng);
    proj.wv = random_matrix(6, 4, rng);
    proj.wo = random_matrix(4, 6, rng);
    const Tensor x = random_matrix(5, 6, rng);

    const FunnelPair full = csi_value_output(proj, 1.0);
    CHECK(max_abs_diff(self_attention_forward(proj, x, nullptr, &full),
                       self_attention_forward(proj, x)) < 1e-9);

    // wv·wo of rank 2, c' = 2: outputs preserved.
    AttentionProjections low = proj;
    low.wv = random_rank_matrix(6, 4, 2, rng);
    const FunnelPair at_rank = csi_value_output(low, 0.5);
    REQUIRE(at_rank.reduced_width() == 2);
    CHECK(max_abs_diff(self_attention_forward(low, x, nullptr, &at_rank),
                       self_attention_forward(low, x)) < 1e-8);
}

TEST_CASE("csi_value_output rank-1 error matches the truncation oracle") {
    Rng rng(139);
    AttentionProjections proj;
    proj.wq = random_matrix(6, 4, rng);
    proj.wk = random_matrix(6, 4, rng);
    proj.wv = random_matrix(6, 4, rng);
    proj.wo = random_matrix(4, 6, rng);
    const FunnelPair funnel = csi_value_output(proj, 0.25);  // c' = 1
    const Tensor x = random_matrix(7, 6, rng);

    // The funneled attention equals attention with wv·wo replaced by its
    // rank-1 truncation, applied to the same attention weights.
    const Tensor vo = matmul(proj.wv, proj.wo);
    const SvdResult d = svd(vo);
    Tensor vo_rank1({vo.rows(), vo.cols()});
    for (std::size_t i = 0; i < vo.rows(); ++i)
        for (std::size_t j = 0; j < vo.cols(); ++j) vo_rank1(i, j) = d.u(i, 0) * d.s(0) * d.v(j, 0);

    AttentionProjections oracle = proj;
    oracle.wv = vo_rank1;
    oracle.wo = Tensor::identity(6);
    // Rebuild the oracle with matching inner width so scale matches: keep the
    // original scale by evaluating both with explicit scale of the original.
    const double scale = 1.0 / std::sqrt(4.0);
    const Tensor funneled = self_attention_forward(proj, x, nullptr, &funnel, scale);
    const Tensor reference = self_attention_forward(oracle, x, nullptr, nullptr, scale);
    CHECK(max_abs_diff(funneled, reference) < 1e-8);
}

TEST_CASE("csi_conv_pair with 1x1 kernels reduces to the linear case") {
    Rng rng(149);
    const Tensor w1 = random_matrix(4, 3, rng);  // c_mid × c_in
    const Tensor w2 = random_matrix(5, 4, rng);  // c_out × c_mid
    ConvPair conv;
    conv.k1 = Tensor({1, 1, 4, 3});
    conv.k2 = Tensor({1, 1, 5, 4});
    for (std::size_t o = 0; o < 4; ++o)
        for (std::size_t i = 0; i < 3; ++i) conv.k1(0, 0, o, i) = w1(o, i);
    for (std::size_t o = 0; o < 5; ++o)
        for (std::size_t i = 0; i < 4; ++i) conv.k2(0, 0, o, i) = w2(o, i);

    const FunnelPair conv_funnel = csi_conv_pair(conv, 0.5);
    const FunnelPair linear_funnel = csi_linear_pair({w1, w2}, 0.5);
    CHECK(max_abs_diff(conv_funnel.f1, linear_funnel.f1) < 1e-9);
    CHECK(max_abs_diff(conv_funnel.f2, linear_funnel.f2) < 1e-9);
}

TEST_CASE("csi_conv_pair lossless when the patch matrix has rank 1") {
    Rng rng(151);
    ConvPair conv;
    conv.k1 = Tensor({3, 3, 4, 2});
    // All output channels identical: the input-patch matrix has rank 1.
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) {
            const double base = rng.normal();
            for (std::size_t i = 0; i < 2; ++i) {
                const double v = base + 0.3 * static_cast<double>(i);
                for (std::size_t o = 0; o < 4; ++o) conv.k1(a, b, o, i) = v;
            }
        }
    conv.k2 = random_tensor({3, 3, 3, 4}, rng);
    const FunnelPair funnel = csi_conv_pair(conv, 0.25);  // c' = 1
    const Tensor a = conv_kernel_input_patch_matrix(conv.k1);
    const Tensor b = conv_kernel_output_collection_matrix(conv.k2);
    const Tensor product = matmul(b, a);
    const Tensor effective = matmul(matmul(b, funnel.f2), matmul(funnel.f1, a));
    CHECK(frobenius_norm(effective - product) <= 1e-9 * std::max(1.0, frobenius_norm(product)));
}

TEST_CASE("csi_conv_pair matches the matrix-level truncation oracle") {
    Rng rng(157);
    ConvPair conv;
    conv.k1 = random_tensor({3, 3, 6, 3}, rng);
    conv.k2 = random_tensor({3, 3, 4, 6}, rng);
    const FunnelPair funnel = csi_conv_pair(conv, 0.5);  // c' = 3
    const Tensor a = conv_kernel_input_patch_matrix(conv.k1);
    const Tensor b = conv_kernel_output_collection_matrix(conv.k2);
    const Tensor effective = matmul(matmul(b, funnel.f2), matmul(funnel.f1, a));
    const Tensor truncated = truncated_approx(matmul(b, a), 3);
    CHECK(frobenius_norm(effective - truncated) < 1e-8);
}

TEST_CASE("merge_linear identity funnel leaves weights unchanged") {
    Rng rng(163);
    const LinearPair pair{random_matrix(4, 6, rng), random_matrix(5, 4, rng),
                          Nonlinearity::relu};
    FunnelPair funnel;
    funnel.f1 = Tensor::identity(4);
    funnel.f2 = Tensor::identity(4);
    funnel.fun_factor = 1.0;
    funnel.target = FunnelTarget::linear_pair;
    const LinearPair merged = merge_linear(pair, funnel);
    CHECK(max_abs_diff(merged.w1, pair.w1) == 0.0);
    CHECK(max_abs_diff(merged.w2, pair.w2) == 0.0);
}

TEST_CASE("merge_linear forward agrees with the funneled form") {
    Rng rng(167);
    const LinearPair pair{random_matrix(6, 5, rng), random_matrix(4, 6, rng),
                          Nonlinearity::silu};
    const FunnelPair funnel = csi_linear_pair(pair, 0.5);
    const LinearPair merged = merge_linear(pair, funnel);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor x = random_matrix(5, 1, rng);
        CHECK(max_abs_diff(linear_pair_forward(merged, x),
                           funneled_linear_forward(pair, funnel, x)) <= 1e-12);
    }
}

TEST_CASE("merged pair parameter count shrinks") {
    Rng rng(173);
    const LinearPair pair{random_matrix(8, 10, rng), random_matrix(12, 8, rng)};
    const FunnelPair funnel = csi_linear_pair(pair, 0.5);
    const LinearPair merged = merge_linear(pair, funnel);
    const std::size_t c_prime = funnel.reduced_width();
    CHECK(merged.w1.size() + merged.w2.size() == c_prime * 10 + 12 * c_prime);
    CHECK(merged.w1.size() + merged.w2.size() < pair.w1.size() + pair.w2.size());
}

TEST_CASE("merge_conv identity funnel and linear agreement") {
    Rng rng(179);
    ConvPair conv;
    conv.k1 = random_tensor({1, 1, 4, 3}, rng);
    conv.k2 = random_tensor({1, 1, 5, 4}, rng);
    const FunnelPair funnel = csi_conv_pair(conv, 0.5);
    const ConvPair merged = merge_conv(conv, funnel);

    // 1×1 kernels: merged kernels equal the merged linear pair.
    Tensor w1({4, 3}), w2({5, 4});
    for (std::size_t o = 0; o < 4; ++o)
        for (std::size_t i = 0; i < 3; ++i) w1(o, i) = conv.k1(0, 0, o, i);
    for (std::size_t o = 0; o < 5; ++o)
        for (std::size_t i = 0; i < 4; ++i) w2(o, i) = conv.k2(0, 0, o, i);
    const LinearPair merged_linear =
        merge_linear({w1, w2}, csi_linear_pair({w1, w2}, 0.5));
    for (std::size_t o = 0; o < merged.k1.extent(2); ++o)
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(merged.k1(0, 0, o, i) ==
                  doctest::Approx(merged_linear.w1(o, i)).epsilon(1e-10));
}

TEST_CASE("merge_conv forward agrees with the funneled form") {
    Rng rng(181);
    ConvPair conv;
    conv.k1 = random_tensor({3, 3, 6, 3}, rng, 0.4);
    conv.k2 = random_tensor({3, 3, 4, 6}, rng, 0.4);
    const FunnelPair funnel = csi_conv_pair(conv, 0.5);
    const ConvPair merged = merge_conv(conv, funnel);
    const Tensor latent = random_tensor({2, 3, 8, 8}, rng);
    CHECK(max_abs_diff(conv_pair_forward(merged, latent),
                       funneled_conv_forward(conv, funnel, latent)) <= 1e-12);
}

TEST_CASE("merge exactness holds for He-initialized funnels too") {
    Rng rng(191);
    const LinearPair pair{random_matrix(6, 5, rng), random_matrix(4, 6, rng),
                          Nonlinearity::relu};
    const FunnelPair he = he_init_baseline(6, 3, 2024);
    const LinearPair merged = merge_linear(pair, he);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x = random_matrix(5, 3, rng);
        CHECK(max_abs_diff(linear_pair_forward(merged, x),
                           funneled_linear_forward(pair, he, x)) <= 1e-12);
    }
}

TEST_CASE("merge rejects mismatched funnels") {
    Rng rng(193);
    const LinearPair pair{random_matrix(6, 5, rng), random_matrix(4, 6, rng)};
    FunnelPair wrong = csi_linear_pair(pair, 0.5);
    wrong.target = FunnelTarget::conv_pair;
    CHECK_THROWS_AS((void)merge_linear(pair, wrong), ShapeError);
}

TEST_CASE("truncated_layer_baseline full rank is exact") {
    Rng rng(197);
    const Tensor w = random_matrix(5, 5, rng);
    const auto [w1, w2] = truncated_layer_baseline(w, 1.0);
    CHECK(max_abs_diff(matmul(w2, w1), w) < 1e-9);
}

TEST_CASE("truncated_layer_baseline diagonal truncation") {
    const Tensor w = diag_matrix(std::vector<double>{3.0, 2.0, 1.0, 0.5});
    const auto [w1, w2] = truncated_layer_baseline(w, 0.5);
    const Tensor expected = diag_matrix(std::vector<double>{3.0, 2.0, 0.0, 0.0});
    CHECK(max_abs_diff(matmul(w2, w1), expected) < 1e-9);
}

TEST_CASE("truncated_layer_baseline parameter arithmetic and residual") {
    Rng rng(199);
    const Tensor w = random_matrix(8, 8, rng);
    const auto [w1, w2] = truncated_layer_baseline(w, 0.25);
    CHECK(w1.size() + w2.size() == 32);  // 2·2·8 < 64
    CHECK(w1.size() + w2.size() < w.size());
    const SvdResult d = svd(w);
    double tail = 0.0;
    for (std::size_t i = 2; i < 8; ++i) tail += d.s(i) * d.s(i);
    CHECK(frobenius_norm(w - matmul(w2, w1)) ==
          doctest::Approx(std::sqrt(tail)).epsilon(1e-9));
    // Parameters shrink strictly only below r = 0.5.
    const auto [h1, h2] = truncated_layer_baseline(w, 0.5);
    CHECK(h1.size() + h2.size() == w.size());
}

TEST_CASE("he_init_baseline determinism and moments") {
    const FunnelPair a = he_init_baseline(40, 20, 7);
    const FunnelPair b = he_init_baseline(40, 20, 7);
    CHECK(max_abs_diff(a.f1, b.f1) == 0.0);
    CHECK(max_abs_diff(a.f2, b.f2) == 0.0);
    const FunnelPair c = he_init_baseline(40, 20, 8);
    CHECK(max_abs_diff(a.f1, c.f1) > 0.0);

    // Sample variance of f1 entries within 5% of 2/fan_in (fan_in = 40).
    const FunnelPair wide = he_init_baseline(500, 200, 99);
    double mean = 0.0, sq = 0.0;
    for (double v : wide.f1.data()) {
        mean += v;
        sq += v * v;
    }
    const auto count = static_cast<double>(wide.f1.size());
    mean /= count;
    const double variance = sq / count - mean * mean;
    CHECK(variance == doctest::Approx(2.0 / 500.0).epsilon(0.05));
}

TEST_CASE("CSI beats He initialization on the effective-product residual") {
    Rng rng(211);
    int csi_wins = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const LinearPair pair{random_matrix(6, 8, rng), random_matrix(8, 6, rng)};
        const Tensor product = matmul(pair.w2, pair.w1);
        const FunnelPair csi = csi_linear_pair(pair, 0.5);
        const FunnelPair he =
            he_init_baseline(6, csi.reduced_width(), 1000 + static_cast<unsigned>(trial));
        const double csi_residual = frobenius_norm(effective_product(pair, csi) - product);
        const double he_residual = frobenius_norm(effective_product(pair, he) - product);
        if (he_residual > csi_residual) ++csi_wins;
    }
    CHECK(csi_wins >= 95);
}

TEST_CASE("merged pair multiply-adds equal c' times (c_in + c_out) per position") {
    // FLOPs formula identity: the merged matrices cost
    // 2 · positions · c' · (c_in + c_out) FLOPs (2 FLOPs per multiply-add).
    const std::uint64_t positions = 96, c_in = 10, c_out = 12, c_prime = 4;
    const std::uint64_t merged = vdc::flops::linear(positions, c_in, c_prime) +
                                 vdc::flops::linear(positions, c_prime, c_out);
    CHECK(merged == 2 * positions * c_prime * (c_in + c_out));
    const std::uint64_t original = vdc::flops::linear(positions, c_in, 8) +
                                   vdc::flops::linear(positions, 8, c_out);
    CHECK(merged < original);  // c' < c_inner strictly reduces the count
}

TEST_CASE("csi rejects out-of-range fun factors") {
    Rng rng(223);
    const LinearPair pair{random_matrix(4, 4, rng), random_matrix(4, 4, rng)};
    CHECK_THROWS_AS((void)csi_linear_pair(pair, 0.0), ArgumentError);
    CHECK_THROWS_AS((void)csi_linear_pair(pair, 1.0001), ArgumentError);
}

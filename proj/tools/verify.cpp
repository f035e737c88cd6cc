#include "verify.hpp"

#include <algorithm>
#include <cmath>

#include "vdc/attnopt.hpp"
#include "vdc/conditioning.hpp"
#include "vdc/errors.hpp"
#include "vdc/funnel.hpp"
#include "vdc/linalg.hpp"
#include "vdc/nn.hpp"
#include "vdc/pruning.hpp"
#include "vdc/report.hpp"
#include "vdc/rng.hpp"
#include "vdc/toyunet.hpp"

namespace vdc::verify {

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor m({rows, cols});
    for (double& v : m.data()) v = rng.normal();
    return m;
}

void push(std::vector<CheckResult>& results, std::string name, double metric,
          double threshold) {
    results.push_back({std::move(name), metric <= threshold, metric, threshold});
}

std::vector<CheckResult> linalg_suite(const Options& options) {
    Rng rng(derive_seed(options.seed, 1));
    std::vector<CheckResult> results;

    double worst_recon = 0.0, worst_ortho = 0.0, worst_mp = 0.0, worst_tail = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t m = 2 + rng.below(14);
        const std::size_t n = 2 + rng.below(14);
        const Tensor a = random_matrix(m, n, rng);
        const SvdResult d = svd(a);
        Tensor rebuilt({m, n});
        for (std::size_t t = 0; t < d.s.size(); ++t)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    rebuilt(i, j) += d.u(i, t) * d.s(t) * d.v(j, t);
        worst_recon = std::max(
            worst_recon, frobenius_norm(a - rebuilt) / std::max(1.0, frobenius_norm(a)));
        worst_ortho = std::max(worst_ortho,
                               max_abs_diff(matmul(transpose(d.u), d.u),
                                            Tensor::identity(d.u.cols())));
        worst_ortho = std::max(worst_ortho,
                               max_abs_diff(matmul(transpose(d.v), d.v),
                                            Tensor::identity(d.v.cols())));

        const Tensor a_pinv = pinv(a);
        worst_mp = std::max(worst_mp, max_abs_diff(matmul(matmul(a, a_pinv), a), a));
        worst_mp = std::max(worst_mp,
                            max_abs_diff(matmul(matmul(a_pinv, a), a_pinv), a_pinv));

        const std::size_t k = 1 + rng.below(std::min(m, n));
        double tail = 0.0;
        for (std::size_t i = k; i < d.s.size(); ++i) tail += d.s(i) * d.s(i);
        worst_tail = std::max(worst_tail,
                              std::fabs(frobenius_norm(a - truncated_approx(a, k)) -
                                        std::sqrt(tail)));
    }
    push(results, "linalg.svd_reconstruction", worst_recon, 1e-10);
    push(results, "linalg.svd_orthonormality", worst_ortho, 1e-10);
    push(results, "linalg.pinv_moore_penrose", worst_mp, 1e-9);
    push(results, "linalg.truncation_tail", worst_tail, 1e-9);

    // Probabilistic Eckart-Young: the truncation is never beaten by random
    // rank-k competitors.
    const Tensor a = random_matrix(8, 6, rng);
    const double best = frobenius_norm(a - truncated_approx(a, 2));
    double margin = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor b =
            matmul(random_matrix(8, 2, rng), random_matrix(2, 6, rng));
        margin = std::max(margin, best - frobenius_norm(a - b));
    }
    push(results, "linalg.eckart_young_margin", margin, 1e-9);
    return results;
}

std::vector<CheckResult> funnel_suite(const Options& options) {
    Rng rng(derive_seed(options.seed, 2));
    std::vector<CheckResult> results;

    double worst_csi = 0.0;
    for (const double ff : {0.25, 0.5, 0.75, 1.0}) {
        for (int trial = 0; trial < 5; ++trial) {
            const std::size_t inner = 4 + rng.below(10);
            const LinearPair pair{random_matrix(inner, inner + rng.below(8), rng),
                                  random_matrix(inner + rng.below(8), inner, rng),
                                  Nonlinearity::silu};
            const FunnelPair funnel = csi_linear_pair(pair, ff);
            const Tensor product = matmul(pair.w2, pair.w1);
            const Tensor effective =
                matmul(matmul(pair.w2, funnel.f2), matmul(funnel.f1, pair.w1));
            const Tensor truncated = truncated_approx(product, funnel.reduced_width());
            worst_csi = std::max(worst_csi, frobenius_norm(effective - truncated) /
                                                std::max(1.0, frobenius_norm(truncated)));
        }
    }
    push(results, "funnel.csi_matches_truncation", worst_csi, 1e-8);

    double worst_merge = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        LinearPair pair{random_matrix(8, 6, rng), random_matrix(5, 8, rng),
                        Nonlinearity::silu};
        FunnelPair funnel = csi_linear_pair(pair, 0.5);
        const LinearPair merged = merge_linear(pair, funnel);
        // Perturbing the funnel after the merge desynchronizes the two paths.
        if (options.inject_fault && trial == 3) funnel.f2(0, 0) += 1e-3;
        for (int probe = 0; probe < 10; ++probe) {
            const Tensor x = random_matrix(6, 2, rng);
            worst_merge = std::max(worst_merge,
                                   max_abs_diff(linear_pair_forward(merged, x),
                                                funneled_linear_forward(pair, funnel, x)));
        }
    }
    push(results, "funnel.merge_exactness_linear", worst_merge, 1e-12);

    double worst_conv = 0.0;
    {
        Rng init = rng.fork(11);
        ConvPair conv;
        conv.k1 = Tensor({3, 3, 6, 3});
        conv.k2 = Tensor({3, 3, 4, 6});
        for (double& v : conv.k1.data()) v = init.normal(0.0, 0.3);
        for (double& v : conv.k2.data()) v = init.normal(0.0, 0.3);
        const FunnelPair funnel = csi_conv_pair(conv, 0.5);
        const ConvPair merged = merge_conv(conv, funnel);
        for (int probe = 0; probe < 5; ++probe) {
            Tensor latent({2, 3, 6, 6});
            for (double& v : latent.data()) v = init.normal();
            worst_conv = std::max(worst_conv,
                                  max_abs_diff(conv_pair_forward(merged, latent),
                                               funneled_conv_forward(conv, funnel, latent)));
        }
    }
    push(results, "funnel.merge_exactness_conv", worst_conv, 1e-12);

    int csi_wins = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const LinearPair pair{random_matrix(6, 8, rng), random_matrix(8, 6, rng)};
        const Tensor product = matmul(pair.w2, pair.w1);
        const FunnelPair csi = csi_linear_pair(pair, 0.5);
        const FunnelPair he = he_init_baseline(6, csi.reduced_width(), rng.next_u64());
        const double csi_res = frobenius_norm(
            matmul(matmul(pair.w2, csi.f2), matmul(csi.f1, pair.w1)) - product);
        const double he_res = frobenius_norm(
            matmul(matmul(pair.w2, he.f2), matmul(he.f1, pair.w1)) - product);
        if (he_res > csi_res) ++csi_wins;
    }
    push(results, "funnel.csi_beats_he_init", 100.0 - csi_wins, 5.0);
    return results;
}

std::vector<CheckResult> pruning_suite(const Options& options) {
    Rng rng(derive_seed(options.seed, 3));
    std::vector<CheckResult> results;

    double worst_gap = 0.0, worst_sum = 0.0, worst_box = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t big_n = 3 + rng.below(8);
        const std::size_t n = 1 + rng.below(big_n - 1);
        std::vector<double> q(big_n);
        for (double& v : q) v = 0.02 + 0.98 * rng.uniform();
        const InclusionSolution sol = solve_inclusion(q, n);
        const InclusionSolution oracle = oracle_active_set(q, n);
        worst_gap = std::max(worst_gap, std::fabs(sol.objective - oracle.objective));
        double sum = 0.0;
        for (double p : sol.p) {
            sum += p;
            worst_box = std::max(worst_box, std::max(-p, p - 1.0));
        }
        worst_sum = std::max(worst_sum, std::fabs(sum - static_cast<double>(n)));
    }
    push(results, "pruning.solver_equals_oracle", worst_gap, 1e-9);
    push(results, "pruning.sum_constraint", worst_sum, 1e-9);
    push(results, "pruning.box_constraint", worst_box, 1e-12);

    double worst_fd = 0.0, worst_colsum = 0.0;
    int tested = 0;
    while (tested < 25) {
        const std::size_t big_n = 3 + rng.below(6);
        const std::size_t n = 1 + rng.below(big_n - 1);
        std::vector<double> q(big_n);
        for (double& v : q) v = 0.05 + 0.9 * rng.uniform();
        Tensor jac({1});
        try {
            jac = solver_jacobian(q, n, JacobianMode::exact);
        } catch (const DegenerateError&) {
            continue;
        }
        ++tested;
        const double h = 1e-6;
        for (std::size_t j = 0; j < big_n; ++j) {
            double colsum = 0.0;
            std::vector<double> hi = q, lo = q;
            hi[j] += h;
            lo[j] -= h;
            const InclusionSolution up = solve_inclusion(hi, n);
            const InclusionSolution dn = solve_inclusion(lo, n);
            for (std::size_t i = 0; i < big_n; ++i) {
                worst_fd = std::max(
                    worst_fd, std::fabs(jac(i, j) - (up.p[i] - dn.p[i]) / (2.0 * h)));
                colsum += jac(i, j);
            }
            worst_colsum = std::max(worst_colsum, std::fabs(colsum));
        }
    }
    push(results, "pruning.jacobian_vs_fd", worst_fd, 1e-5);
    push(results, "pruning.jacobian_column_sums", worst_colsum, 1e-10);

    const std::size_t draws = 20000;
    double worst_sigma = 0.0;
    for (int vec = 0; vec < 4; ++vec) {
        const std::size_t big_n = 4 + rng.below(4);
        const std::size_t n = 2;
        std::vector<double> q(big_n);
        for (double& v : q) v = 0.05 + 0.9 * rng.uniform();
        const std::vector<double> p = solve_inclusion(q, n).p;
        std::vector<double> freq_brewer(big_n, 0.0), freq_pps(big_n, 0.0);
        for (std::size_t d = 0; d < draws; ++d) {
            const GateSample a = sample_fixed_size(p, n, rng);
            const GateSample b = sample_systematic_pps(p, n, rng);
            for (std::size_t i = 0; i < big_n; ++i) {
                freq_brewer[i] += a.z[i];
                freq_pps[i] += b.z[i];
            }
        }
        for (std::size_t i = 0; i < big_n; ++i) {
            const double sigma =
                std::sqrt(p[i] * (1.0 - p[i]) / static_cast<double>(draws));
            if (sigma == 0.0) continue;
            worst_sigma = std::max(
                worst_sigma,
                std::fabs(freq_brewer[i] / draws - p[i]) / sigma);
            worst_sigma = std::max(
                worst_sigma, std::fabs(freq_pps[i] / draws - p[i]) / sigma);
        }
    }
    push(results, "pruning.sampler_inclusion_sigmas", worst_sigma, 4.0);

    push(results, "pruning.gate_forward",
         std::fabs(gate_forward(1, 0.3) - 1.0) + std::fabs(gate_forward(0, 0.9)) +
             std::fabs(gate_grad() - 1.0),
         0.0);
    return results;
}

std::vector<CheckResult> attnopt_suite(const Options& options) {
    Rng rng(derive_seed(options.seed, 4));
    std::vector<CheckResult> results;
    double worst_dev = 0.0;
    bool flops_drop = true, softmax_zero = true;
    for (int trial = 0; trial < 20; ++trial) {
        CrossAttnLayer layer;
        const std::size_t heads = 1 + rng.below(3);
        const std::size_t width = heads * (1 + rng.below(4));
        layer.wq = random_matrix(2 + rng.below(8), width, rng);
        layer.wk = random_matrix(2 + rng.below(8), width, rng);
        layer.wv = random_matrix(layer.wk.rows(), width, rng);
        layer.wo = random_matrix(width, 2 + rng.below(8), rng);
        layer.head_count = heads;
        const RewriteReport report =
            rewrite_equivalence_check(layer, 5, rng.next_u64(), 8 + rng.below(16));
        worst_dev = std::max(worst_dev, report.max_abs_deviation);
        flops_drop = flops_drop && report.flops_optimized < report.flops_full;
        softmax_zero = softmax_zero && report.softmax_ops_optimized == 0;
    }
    push(results, "attnopt.rewrite_equivalence", worst_dev, 1e-10);
    push(results, "attnopt.flops_strictly_drop", flops_drop ? 0.0 : 1.0, 0.0);
    push(results, "attnopt.softmax_ops_zero", softmax_zero ? 0.0 : 1.0, 0.0);
    return results;
}

std::vector<CheckResult> toyunet_suite(const Options& options) {
    Rng rng(derive_seed(options.seed, 5));
    std::vector<CheckResult> results;

    ToyUNetSpec spec;
    spec.frames = 6;
    spec.latent_channels = 2;
    spec.height = 16;
    spec.width = 8;
    spec.stage_channels = {4, 6, 8};
    spec.down_blocks = 3;
    spec.up_blocks = 3;
    spec.cond_width = 8;
    spec.seed = derive_seed(options.seed, 55);

    bool shapes_ok = true;
    for (const Multiscaling ms : {Multiscaling::none, Multiscaling::temporal,
                                  Multiscaling::spatial, Multiscaling::both}) {
        ToyUNetSpec variant = spec;
        variant.multiscaling = ms;
        const ToyUNet net = build(variant);
        Tensor latent({spec.frames, spec.latent_channels, spec.height, spec.width});
        for (double& v : latent.data()) v = rng.normal(0.0, 0.5);
        Tensor cond({1, spec.cond_width});
        for (double& v : cond.data()) v = rng.normal(0.0, 0.5);
        const Tensor out = forward(net, latent, cond);
        shapes_ok = shapes_ok && out.same_shape(latent) && all_finite(out);
    }
    push(results, "toyunet.shape_grid", shapes_ok ? 0.0 : 1.0, 0.0);

    Tensor latent({spec.frames, spec.latent_channels, spec.height, spec.width});
    for (double& v : latent.data()) v = rng.normal(0.0, 0.5);
    Tensor cond({1, spec.cond_width});
    for (double& v : cond.data()) v = rng.normal(0.0, 0.5);

    ToyUNet gated = build(spec);
    const std::vector<double> zeros(temporal_block_count(gated), 0.0);
    set_gates(gated, zeros);
    const ToyUNet deleted = prune_to(build(spec), std::vector<std::size_t>{});
    push(results, "toyunet.zero_gate_equals_deletion",
         max_abs_diff(forward(gated, latent, cond), forward(deleted, latent, cond)),
         1e-12);

    ToyUNet funneled = build(spec);
    (void)inject_funnels(funneled, 0.5, {.qk = true, .vo = true, .conv = true});
    const ToyUNet merged = merge_funnels(funneled);
    push(results, "toyunet.merge_equivalence",
         max_abs_diff(forward(funneled, latent, cond), forward(merged, latent, cond)),
         1e-12);

    ToyUNetSpec stack = spec;
    stack.frames = 14;
    const std::uint64_t baseline = count_flops(stack).total();
    stack.optimized_cross_attention = true;
    const std::uint64_t rewrite = count_flops(stack).total();
    stack.multiscaling = Multiscaling::temporal;
    const std::uint64_t multiscale = count_flops(stack).total();
    const ToyUNet stack_net = build(stack);
    std::vector<double> q(temporal_block_count(stack_net));
    for (double& v : q) v = 0.1 + 0.8 * rng.uniform();
    const ToyUNet pruned =
        prune(stack_net, q, budget_from_prune_rate(0.7, temporal_block_count(stack_net)));
    const std::uint64_t prune_total = count_flops(pruned).total();
    ToyUNet stack_funneled = pruned;
    (void)inject_funnels(stack_funneled, 0.5, {.qk = true, .vo = true, .conv = true});
    const std::uint64_t funnel_total = count_flops(merge_funnels(stack_funneled)).total();
    const bool monotone = rewrite < baseline && multiscale < rewrite &&
                          prune_total < multiscale && funnel_total < prune_total;
    push(results, "toyunet.flops_monotone_stack", monotone ? 0.0 : 1.0, 0.0);

    const Tensor run_a = forward(build(spec), latent, cond);
    const Tensor run_b = forward(build(spec), latent, cond);
    push(results, "toyunet.forward_determinism",
         tensor_digest(run_a) == tensor_digest(run_b) ? 0.0 : 1.0, 0.0);
    return results;
}

std::vector<CheckResult> conditioning_suite(const Options& options) {
    Rng rng(derive_seed(options.seed, 6));
    std::vector<CheckResult> results;

    Tensor frames({14, 1, 64, 32});
    Tensor first({64, 32});
    for (double& v : first.data()) v = 0.1 + 0.8 * rng.uniform();
    for (std::size_t t = 0; t < 14; ++t)
        for (std::size_t y = 0; y < 64; ++y)
            for (std::size_t z = 0; z < 32; ++z) frames(t, 0, y, z) = first(y, z);
    const double static_area = motion_descriptor(Clip{frames, 25.0}, 64, 32).area;
    push(results, "conditioning.static_area_is_one", std::fabs(static_area - 1.0), 1e-12);

    Tensor ortho({14, 1, 14, 2});
    for (std::size_t t = 0; t < 14; ++t) {
        ortho(t, 0, t, 0) = 1.0;
        ortho(t, 0, t, 1) = 1.0;
    }
    const double ortho_area = motion_descriptor(Clip{ortho, 25.0}, 14, 2).area;
    push(results, "conditioning.orthogonal_area_15_28",
         std::fabs(ortho_area - 15.0 / 28.0), 1e-12);

    Tensor moving({14, 1, 32, 16});
    for (std::size_t t = 0; t < 14; ++t)
        for (std::size_t d = 0; d < 4; ++d)
            moving(t, 0, (2 * t + d) % 32, (t + d) % 16) = 1.0;
    const Clip clip{moving, 25.0};
    const double area = motion_descriptor(clip, 32, 16).area;
    Clip half = clip;
    for (double& v : half.frames.data()) v *= 0.5;
    push(results, "conditioning.scale_invariance",
         std::fabs(motion_descriptor(half, 32, 16).area - area), 0.0);

    Tensor rgb({3, 3, 16, 8});
    for (double& v : rgb.data()) v = rng.uniform();
    push(results, "conditioning.grayscale_resample_commute",
         max_abs_diff(resample_area(grayscale(rgb), 4, 2),
                      grayscale(resample_area(rgb, 4, 2))),
         1e-12);
    return results;
}

}  // namespace

const std::vector<std::string> kSuiteNames = {"linalg",  "funnel",  "pruning",
                                              "attnopt", "toyunet", "conditioning"};

std::vector<CheckResult> run_suite(const std::string& suite, const Options& options) {
    if (suite == "linalg") return linalg_suite(options);
    if (suite == "funnel") return funnel_suite(options);
    if (suite == "pruning") return pruning_suite(options);
    if (suite == "attnopt") return attnopt_suite(options);
    if (suite == "toyunet") return toyunet_suite(options);
    if (suite == "conditioning") return conditioning_suite(options);
    if (suite == "all") {
        std::vector<CheckResult> all;
        for (const std::string& name : kSuiteNames) {
            const std::vector<CheckResult> part = run_suite(name, options);
            all.insert(all.end(), part.begin(), part.end());
        }
        return all;
    }
    throw ArgumentError("unknown verify suite: '" + suite + "'");
}

}  // namespace vdc::verify

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "vdc/flops.hpp"
#include "vdc/nn.hpp"
#include "vdc/report.hpp"
#include "vdc/toyunet.hpp"

using namespace vdc;
using test::random_tensor;

namespace {

ToyUNetSpec small_spec() {
    ToyUNetSpec spec;
    spec.frames = 6;
    spec.latent_channels = 2;
    spec.height = 16;
    spec.width = 8;
    spec.stage_channels = {4, 6, 8};
    spec.down_blocks = 3;
    spec.up_blocks = 3;
    spec.cond_width = 8;
    spec.seed = 7;
    return spec;
}

Tensor random_latent(const ToyUNetSpec& spec, Rng& rng) {
    return random_tensor({spec.frames, spec.latent_channels, spec.height, spec.width}, rng,
                         0.5);
}

Tensor random_cond(const ToyUNetSpec& spec, Rng& rng) {
    return random_tensor({1, spec.cond_width}, rng, 0.5);
}

}  // namespace

TEST_CASE("build is deterministic in the seed") {
    const ToyUNetSpec spec = small_spec();
    const ToyUNet a = build(spec);
    const ToyUNet b = build(spec);
    CHECK(max_abs_diff(a.stem, b.stem) == 0.0);
    CHECK(max_abs_diff(a.down[1].resnet.convs.k1, b.down[1].resnet.convs.k1) == 0.0);
    CHECK(a.down[0].temporal.alpha_theta == b.down[0].temporal.alpha_theta);

    ToyUNetSpec other = spec;
    other.seed = 8;
    const ToyUNet c = build(other);
    CHECK(max_abs_diff(a.stem, c.stem) > 0.0);
}

TEST_CASE("four downsamplings put the deepest stage at input/16") {
    ToyUNetSpec spec;
    spec.frames = 2;
    spec.latent_channels = 2;
    spec.height = 32;
    spec.width = 16;
    spec.stage_channels = {2, 2, 2};
    spec.cond_width = 4;
    const ToyUNet net = build(spec);
    Rng rng(1);
    ForwardTrace trace;
    (void)forward(net, random_latent(spec, rng), random_cond(spec, rng), &trace);
    // Mid block runs after 4 downsamples: 32/16 × 16/16.
    bool found = false;
    for (const auto& [name, shape] : trace.shapes) {
        if (name == "mid0") {
            found = true;
            CHECK(shape[2] == 2);
            CHECK(shape[3] == 1);
        }
    }
    CHECK(found);
}

TEST_CASE("parameter counts match the analytic formula") {
    const ToyUNetSpec spec = small_spec();
    CHECK(count_params(build(spec)) == count_params(spec));

    ToyUNetSpec conv_spec = spec;
    conv_spec.temporal_kind = TemporalKind::conv;
    CHECK(count_params(build(conv_spec)) == count_params(conv_spec));
    // Attention carries 4c² per block, temporal conv 2·3·c²: they must differ
    // by exactly 2c² summed over blocks.
    std::size_t attn_total = count_params(spec);
    std::size_t conv_total = count_params(conv_spec);
    std::size_t expected_gap = 0;
    for (std::size_t b = 0; b < spec.down_blocks; ++b) {
        const std::size_t c = spec.stage_width(b);
        expected_gap += 2 * c * c;
    }
    const std::size_t deep = spec.stage_width(spec.down_blocks - 1);
    expected_gap += 2 * deep * deep * spec.mid_blocks;
    for (std::size_t j = 0; j < spec.up_blocks; ++j) {
        const std::size_t c = spec.stage_width(spec.down_blocks - 1 - j);
        expected_gap += 2 * c * c;
    }
    CHECK(conv_total - attn_total == expected_gap);
}

TEST_CASE("forward preserves shape and stays finite on zero input") {
    const ToyUNetSpec spec = small_spec();
    const ToyUNet net = build(spec);
    const Tensor latent({spec.frames, spec.latent_channels, spec.height, spec.width});
    const Tensor cond({1, spec.cond_width});
    const Tensor out = forward(net, latent, cond);
    CHECK(out.shape() == latent.shape());
    CHECK(all_finite(out));
}

TEST_CASE("forward output shape is preserved across the full variant grid") {
    Rng rng(501);
    for (const Multiscaling ms : {Multiscaling::none, Multiscaling::temporal,
                                  Multiscaling::spatial, Multiscaling::both}) {
        for (const bool gates : {false, true}) {
            for (const bool funnels : {false, true}) {
                ToyUNetSpec spec = small_spec();
                spec.multiscaling = ms;
                ToyUNet net = build(spec);
                if (funnels) {
                    (void)inject_funnels(net, 0.5, {.qk = true, .vo = true, .conv = true});
                }
                if (gates) {
                    std::vector<double> q(temporal_block_count(net));
                    for (double& v : q) v = 0.2 + 0.6 * rng.uniform();
                    Rng gate_rng(17);
                    (void)inject_gates(net, q, 4, gate_rng);
                }
                const Tensor latent = random_latent(spec, rng);
                const Tensor out = forward(net, latent, random_cond(spec, rng));
                CHECK(out.shape() == latent.shape());
                CHECK(all_finite(out));
            }
        }
    }
}

TEST_CASE("temporal multiscaling halves the internal frame count") {
    ToyUNetSpec spec = small_spec();
    spec.frames = 14;
    spec.multiscaling = Multiscaling::temporal;
    const ToyUNet net = build(spec);
    Rng rng(502);
    ForwardTrace trace;
    (void)forward(net, random_latent(spec, rng), random_cond(spec, rng), &trace);
    CHECK(trace.internal_frames == 7);

    spec.multiscaling = Multiscaling::none;
    ForwardTrace plain;
    (void)forward(build(spec), random_latent(spec, rng), random_cond(spec, rng), &plain);
    CHECK(plain.internal_frames == 14);
}

TEST_CASE("temporal resampling round trip") {
    Rng rng(503);
    // Constant-in-time latents come back exactly.
    Tensor constant({6, 3, 4, 4});
    const Tensor frame = random_tensor({1, 3, 4, 4}, rng);
    for (std::size_t t = 0; t < 6; ++t)
        for (std::size_t i = 0; i < frame.size(); ++i)
            constant.data()[t * frame.size() + i] = frame.data()[i];
    const Tensor down = downsample_axis_mean(constant, 0);
    CHECK(down.extent(0) == 3);
    const Tensor up = upsample_axis_nearest(down, 0, 6);
    CHECK(max_abs_diff(up, constant) <= 1e-12);

    // T=14 halves to 7 and restores to 14.
    const Tensor t14 = random_tensor({14, 2, 2, 2}, rng);
    const Tensor half = downsample_axis_mean(t14, 0);
    CHECK(half.extent(0) == 7);
    CHECK(upsample_axis_nearest(half, 0, 14).extent(0) == 14);

    // Alternating frames a, b average to (a+b)/2.
    Tensor alt({4, 1, 1, 1}, {1.0, 3.0, 1.0, 3.0});
    const Tensor mean = downsample_axis_mean(alt, 0);
    CHECK(mean(0, 0, 0, 0) == doctest::Approx(2.0));
    CHECK(mean(1, 0, 0, 0) == doctest::Approx(2.0));

    // Odd tail passes through unpaired.
    Tensor odd({3, 1, 1, 1}, {2.0, 4.0, 9.0});
    const Tensor odd_down = downsample_axis_mean(odd, 0);
    CHECK(odd_down.extent(0) == 2);
    CHECK(odd_down(1, 0, 0, 0) == 9.0);

    // Strided variant keeps every second frame.
    const Tensor strided = downsample_axis_stride(alt, 0);
    CHECK(strided(0, 0, 0, 0) == 1.0);
    CHECK(strided(1, 0, 0, 0) == 1.0);
}

TEST_CASE("zero gates are equivalent to structural deletion") {
    const ToyUNetSpec spec = small_spec();
    Rng rng(504);
    const Tensor latent = random_latent(spec, rng);
    const Tensor cond = random_cond(spec, rng);

    ToyUNet gated = build(spec);
    const std::vector<double> zeros(temporal_block_count(gated), 0.0);
    set_gates(gated, zeros);

    const ToyUNet deleted = prune_to(build(spec), std::vector<std::size_t>{});
    CHECK(max_abs_diff(forward(gated, latent, cond), forward(deleted, latent, cond)) <=
          1e-12);
}

TEST_CASE("prune agrees with gating at the top-n set") {
    const ToyUNetSpec spec = small_spec();
    Rng rng(505);
    const Tensor latent = random_latent(spec, rng);
    const Tensor cond = random_cond(spec, rng);
    std::vector<double> q(temporal_block_count(build(spec)));
    for (double& v : q) v = 0.1 + 0.8 * rng.uniform();
    const std::size_t n = 4;

    const ToyUNet pruned = prune(build(spec), q, n);
    ToyUNet gated = build(spec);
    std::vector<double> gates(q.size(), 0.0);
    for (std::size_t idx : select_top_n(q, n)) gates[idx] = 1.0;
    set_gates(gated, gates);
    CHECK(max_abs_diff(forward(pruned, latent, cond), forward(gated, latent, cond)) <=
          1e-12);
}

TEST_CASE("inject_gates with full budget leaves the net unchanged") {
    const ToyUNetSpec spec = small_spec();
    Rng rng(506);
    ToyUNet net = build(spec);
    std::vector<double> q(temporal_block_count(net), 0.5);
    Rng gate_rng(1);
    const GateSample sample = inject_gates(net, q, q.size(), gate_rng);
    CHECK(sample.count() == q.size());
    const Tensor latent = random_latent(spec, rng);
    const Tensor cond = random_cond(spec, rng);
    CHECK(max_abs_diff(forward(net, latent, cond), forward(build(spec), latent, cond)) ==
          0.0);
}

TEST_CASE("funnel injection at full factor on VO pairs is near-lossless") {
    const ToyUNetSpec spec = small_spec();
    Rng rng(507);
    const Tensor latent = random_latent(spec, rng);
    const Tensor cond = random_cond(spec, rng);
    ToyUNet net = build(spec);
    const std::size_t installed = inject_funnels(net, 1.0, {.vo = true});
    CHECK(installed == temporal_block_count(net));
    const Tensor funneled = forward(net, latent, cond);
    const Tensor original = forward(build(spec), latent, cond);
    CHECK(max_abs_diff(funneled, original) <= 1e-8);
}

TEST_CASE("merged funnels match the unmerged forward") {
    const ToyUNetSpec spec = small_spec();
    Rng rng(508);
    ToyUNet net = build(spec);
    (void)inject_funnels(net, 0.5, {.qk = true, .vo = true, .conv = true});
    const ToyUNet merged = merge_funnels(net);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor latent = random_latent(spec, rng);
        const Tensor cond = random_cond(spec, rng);
        CHECK(max_abs_diff(forward(net, latent, cond), forward(merged, latent, cond)) <=
              1e-12);
    }
}

TEST_CASE("funnels on a conv-temporal net only hit the resnets") {
    ToyUNetSpec spec = small_spec();
    spec.temporal_kind = TemporalKind::conv;
    ToyUNet net = build(spec);
    CHECK(inject_funnels(net, 0.5, {.qk = true, .vo = true}) == 0);
    CHECK(inject_funnels(net, 0.5, {.conv = true}) == 7);
}

TEST_CASE("single 1x1 conv flops unit case") {
    CHECK(flops::conv2d(1, 1, 1, 1, 1, 1, 1) == 2);
}

TEST_CASE("spec-level and net-level flops agree on fresh nets") {
    for (const Multiscaling ms :
         {Multiscaling::none, Multiscaling::temporal, Multiscaling::spatial}) {
        ToyUNetSpec spec = small_spec();
        spec.multiscaling = ms;
        const FlopsReport a = count_flops(spec);
        const FlopsReport b = count_flops(build(spec));
        CHECK(a.total() == b.total());
        CHECK(a.total_softmax_ops() == b.total_softmax_ops());
    }
    ToyUNetSpec opt = small_spec();
    opt.optimized_cross_attention = true;
    CHECK(count_flops(opt).total() == count_flops(build(opt)).total());
}

TEST_CASE("temporal multiscaling lowers counted flops") {
    ToyUNetSpec base = small_spec();
    base.frames = 14;
    ToyUNetSpec ms = base;
    ms.multiscaling = Multiscaling::temporal;
    CHECK(count_flops(ms).total() < count_flops(base).total());
}

TEST_CASE("optimized cross-attention zeroes softmax ops in cross layers") {
    ToyUNetSpec spec = small_spec();
    spec.temporal_kind = TemporalKind::conv;  // isolate cross-attention softmaxes
    const FlopsReport full = count_flops(spec);
    CHECK(full.total_softmax_ops() > 0);
    spec.optimized_cross_attention = true;
    const FlopsReport opt = count_flops(spec);
    CHECK(opt.total_softmax_ops() == 0);
    CHECK(opt.total() < full.total());
}

TEST_CASE("pruning reduces flops by exactly the deleted blocks' counts") {
    const ToyUNetSpec spec = small_spec();
    const ToyUNet net = build(spec);
    const std::size_t big_n = temporal_block_count(net);
    std::vector<double> q(big_n);
    Rng rng(509);
    for (double& v : q) v = 0.1 + 0.8 * rng.uniform();
    const std::size_t n = budget_from_prune_rate(0.7, big_n);
    const ToyUNet pruned = prune(net, q, n);

    const FlopsReport before = count_flops(net);
    const FlopsReport after = count_flops(pruned);
    CHECK(after.total() < before.total());

    // Delta equals the sum of the deleted blocks' temporal costs, computed
    // from the per-block difference of the two reports.
    std::uint64_t expected_delta = 0;
    REQUIRE(before.blocks.size() == after.blocks.size());
    for (std::size_t i = 0; i < before.blocks.size(); ++i) {
        expected_delta += before.blocks[i].total() - after.blocks[i].total();
    }
    CHECK(before.total() - after.total() == expected_delta);

    const auto keep = select_top_n(q, n);
    std::size_t kept_attention_blocks = 0;
    for (const BlockFlops& b : after.blocks)
        if (b.attention > 0 || b.softmax_ops > 0) ++kept_attention_blocks;
    (void)kept_attention_blocks;
}

TEST_CASE("stacked optimizations are monotone in counted flops") {
    ToyUNetSpec spec = small_spec();
    spec.frames = 14;
    const std::uint64_t baseline = count_flops(spec).total();

    spec.optimized_cross_attention = true;
    const std::uint64_t with_rewrite = count_flops(spec).total();
    CHECK(with_rewrite < baseline);

    spec.multiscaling = Multiscaling::temporal;
    const std::uint64_t with_ms = count_flops(spec).total();
    CHECK(with_ms < with_rewrite);

    const ToyUNet net = build(spec);
    std::vector<double> q(temporal_block_count(net));
    Rng rng(510);
    for (double& v : q) v = 0.1 + 0.8 * rng.uniform();
    const ToyUNet pruned =
        prune(net, q, budget_from_prune_rate(0.7, temporal_block_count(net)));
    const std::uint64_t with_pruning = count_flops(pruned).total();
    CHECK(with_pruning < with_ms);

    ToyUNet funneled = pruned;
    (void)inject_funnels(funneled, 0.5, {.qk = true, .vo = true, .conv = true});
    const std::uint64_t merged = count_flops(merge_funnels(funneled)).total();
    CHECK(merged < with_pruning);
}

TEST_CASE("two forward passes with identical seeds are bit identical") {
    const ToyUNetSpec spec = small_spec();
    Rng rng(511);
    const Tensor latent = random_latent(spec, rng);
    const Tensor cond = random_cond(spec, rng);
    const Tensor a = forward(build(spec), latent, cond);
    const Tensor b = forward(build(spec), latent, cond);
    CHECK(tensor_digest(a) == tensor_digest(b));
}

TEST_CASE("forward validates latent and cond shapes") {
    const ToyUNetSpec spec = small_spec();
    const ToyUNet net = build(spec);
    CHECK_THROWS_AS(
        (void)forward(net, Tensor({1, 1, 4, 4}), Tensor({1, spec.cond_width})),
        ShapeError);
    CHECK_THROWS_AS((void)forward(net,
                                  Tensor({spec.frames, spec.latent_channels, spec.height,
                                          spec.width}),
                                  Tensor({2, spec.cond_width})),
                    ShapeError);
}

TEST_CASE("spec json round trip") {
    ToyUNetSpec spec = small_spec();
    spec.multiscaling = Multiscaling::both;
    spec.temporal_kind = TemporalKind::conv;
    spec.optimized_cross_attention = true;
    const ToyUNetSpec back = ToyUNetSpec::from_json(spec.to_json());
    CHECK(back.frames == spec.frames);
    CHECK(back.stage_channels == spec.stage_channels);
    CHECK(back.multiscaling == spec.multiscaling);
    CHECK(back.temporal_kind == spec.temporal_kind);
    CHECK(back.optimized_cross_attention == spec.optimized_cross_attention);
    CHECK(back.seed == spec.seed);
    CHECK_THROWS_AS((void)ToyUNetSpec::from_json("not json"), IoError);
}

TEST_CASE("weight bundles round trip through the manifest scheme") {
    const ToyUNetSpec spec = small_spec();
    Rng rng(513);
    ToyUNet net = build(spec);
    (void)inject_funnels(net, 0.5, {.qk = true});
    std::vector<double> gates(temporal_block_count(net), 1.0);
    gates[2] = 0.0;
    set_gates(net, gates);

    const auto dir = std::filesystem::temp_directory_path() / "vdc_weights_test";
    std::filesystem::remove_all(dir);
    save_weights(net, dir);
    const ToyUNet loaded = load_weights(dir);

    const Tensor latent = random_latent(spec, rng);
    const Tensor cond = random_cond(spec, rng);
    CHECK(tensor_digest(forward(net, latent, cond)) ==
          tensor_digest(forward(loaded, latent, cond)));
}

TEST_CASE("merged and pruned nets survive the weight bundle round trip") {
    const ToyUNetSpec spec = small_spec();
    Rng rng(514);
    ToyUNet net = build(spec);
    std::vector<double> q(temporal_block_count(net));
    for (double& v : q) v = 0.1 + 0.8 * rng.uniform();
    net = prune(net, q, 3);
    (void)inject_funnels(net, 0.5, {.qk = true, .vo = true, .conv = true});
    net = merge_funnels(net);

    const auto dir = std::filesystem::temp_directory_path() / "vdc_weights_merged";
    std::filesystem::remove_all(dir);
    save_weights(net, dir);
    const ToyUNet loaded = load_weights(dir);
    CHECK(count_flops(loaded).total() == count_flops(net).total());

    const Tensor latent = random_latent(spec, rng);
    const Tensor cond = random_cond(spec, rng);
    CHECK(tensor_digest(forward(net, latent, cond)) ==
          tensor_digest(forward(loaded, latent, cond)));
}

TEST_CASE("random specs preserve shape across awkward dimensions") {
    Rng rng(515);
    for (int trial = 0; trial < 25; ++trial) {
        ToyUNetSpec spec;
        spec.frames = 1 + rng.below(9);            // odd counts included
        spec.latent_channels = 1 + rng.below(3);
        spec.height = 1 + rng.below(12);           // not divisible by 2^depth
        spec.width = 1 + rng.below(12);
        spec.stage_channels = {2 + rng.below(3), 2 + rng.below(5)};
        spec.down_blocks = 1 + rng.below(3);
        spec.up_blocks = spec.down_blocks;
        spec.mid_blocks = rng.below(2);
        spec.temporal_kind =
            rng.below(2) == 0 ? TemporalKind::attention : TemporalKind::conv;
        spec.cross_attention = rng.below(2) == 0;
        spec.cond_width = 1 + rng.below(6);
        spec.optimized_cross_attention = rng.below(2) == 0;
        spec.multiscaling = static_cast<Multiscaling>(rng.below(4));
        spec.strided_temporal_resample = rng.below(2) == 0;
        spec.seed = rng.next_u64();

        const ToyUNet net = build(spec);
        Tensor latent({spec.frames, spec.latent_channels, spec.height, spec.width});
        for (double& v : latent.data()) v = rng.normal(0.0, 0.5);
        Tensor cond({1, spec.cond_width});
        for (double& v : cond.data()) v = rng.normal(0.0, 0.5);
        ForwardTrace trace;
        const Tensor out = forward(net, latent, cond, &trace);
        REQUIRE(out.shape() == latent.shape());
        REQUIRE(all_finite(out));
        const bool ms_temporal = spec.multiscaling == Multiscaling::temporal ||
                                 spec.multiscaling == Multiscaling::both;
        if (ms_temporal && spec.frames >= 2) {
            CHECK(trace.internal_frames == (spec.frames + 1) / 2);
        } else {
            CHECK(trace.internal_frames == spec.frames);
        }
        CHECK(count_flops(spec).total() == count_flops(net).total());
    }
}

TEST_CASE("svd-like preset reports multiscaling reductions") {
    const ToyUNetSpec base = ToyUNetSpec::svd_like();
    const std::uint64_t baseline = count_flops(base).total();
    ToyUNetSpec temporal = base;
    temporal.multiscaling = Multiscaling::temporal;
    ToyUNetSpec spatial = base;
    spatial.multiscaling = Multiscaling::spatial;
    const std::uint64_t t_total = count_flops(temporal).total();
    const std::uint64_t s_total = count_flops(spatial).total();
    CHECK(t_total < baseline);
    CHECK(s_total < baseline);
}

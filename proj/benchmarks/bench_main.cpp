#include <benchmark/benchmark.h>

#include <vector>

#include "vdc/attnopt.hpp"
#include "vdc/funnel.hpp"
#include "vdc/linalg.hpp"
#include "vdc/pruning.hpp"
#include "vdc/rng.hpp"
#include "vdc/toyunet.hpp"

using namespace vdc;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor m({rows, cols});
    for (double& v : m.data()) v = rng.normal();
    return m;
}

void BM_SvdSquare(benchmark::State& state) {
    Rng rng(1);
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor a = random_matrix(n, n, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(svd(a));
    }
}
BENCHMARK(BM_SvdSquare)->Arg(16)->Arg(32)->Arg(64);

void BM_CsiConvPair(benchmark::State& state) {
    Rng rng(2);
    const auto c = static_cast<std::size_t>(state.range(0));
    ConvPair conv;
    conv.k1 = Tensor({3, 3, c, c});
    conv.k2 = Tensor({3, 3, c, c});
    for (double& v : conv.k1.data()) v = rng.normal(0.0, 0.2);
    for (double& v : conv.k2.data()) v = rng.normal(0.0, 0.2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(csi_conv_pair(conv, 0.5));
    }
}
BENCHMARK(BM_CsiConvPair)->Arg(16)->Arg(64);

void BM_SolveInclusion(benchmark::State& state) {
    Rng rng(3);
    const auto n = static_cast<std::size_t>(state.range(0));
    std::vector<double> q(n);
    for (double& v : q) v = 0.05 + 0.9 * rng.uniform();
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_inclusion(q, n / 3 + 1));
    }
}
BENCHMARK(BM_SolveInclusion)->Arg(9)->Arg(64)->Arg(256);

void BM_BrewerSample(benchmark::State& state) {
    Rng rng(4);
    const auto n = static_cast<std::size_t>(state.range(0));
    std::vector<double> q(n);
    for (double& v : q) v = 0.05 + 0.9 * rng.uniform();
    const std::vector<double> p = solve_inclusion(q, n / 3 + 1).p;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample_fixed_size(p, n / 3 + 1, rng));
    }
}
BENCHMARK(BM_BrewerSample)->Arg(9)->Arg(64);

void BM_CrossAttention(benchmark::State& state) {
    Rng rng(5);
    CrossAttnLayer layer;
    layer.wq = random_matrix(64, 64, rng);
    layer.wk = random_matrix(32, 64, rng);
    layer.wv = random_matrix(32, 64, rng);
    layer.wo = random_matrix(64, 64, rng);
    const Tensor x = random_matrix(1024, 64, rng);
    const Tensor context = random_matrix(1, 32, rng);
    const bool optimized = state.range(0) != 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(optimized ? optimized_cross_attention(layer, x, context)
                                           : full_cross_attention(layer, x, context));
    }
}
BENCHMARK(BM_CrossAttention)->Arg(0)->Arg(1);

void BM_ToyForward(benchmark::State& state) {
    ToyUNetSpec spec;
    spec.frames = 6;
    spec.latent_channels = 2;
    spec.height = 16;
    spec.width = 8;
    spec.stage_channels = {4, 6, 8};
    spec.down_blocks = 3;
    spec.up_blocks = 3;
    spec.cond_width = 8;
    spec.multiscaling = state.range(0) != 0 ? Multiscaling::temporal : Multiscaling::none;
    const ToyUNet net = build(spec);
    Rng rng(6);
    Tensor latent({spec.frames, spec.latent_channels, spec.height, spec.width});
    for (double& v : latent.data()) v = rng.normal(0.0, 0.5);
    Tensor cond({1, spec.cond_width});
    for (double& v : cond.data()) v = rng.normal(0.0, 0.5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(net, latent, cond));
    }
}
BENCHMARK(BM_ToyForward)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();

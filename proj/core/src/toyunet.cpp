#include "vdc/toyunet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "vdc/nn.hpp"
#include "vdc/tensor_io.hpp"

namespace vdc {

namespace {

constexpr double kAlphaTemperature = 0.1;

// Unit-gain initialization. The net is forward-only and its contracts are
// algebraic identities with absolute 1e-12 budgets, so activations must stay
// O(1) through all nine stages; He gain would let magnitudes compound past
// the tolerance via the residual adds.
Tensor init_conv_kernel(std::size_t kh, std::size_t kw, std::size_t c_out, std::size_t c_in,
                        Rng& rng) {
    Tensor k({kh, kw, c_out, c_in});
    const double stddev = std::sqrt(1.0 / static_cast<double>(kh * kw * c_in));
    for (double& v : k.data()) v = rng.normal(0.0, stddev);
    return k;
}

Tensor init_time_kernel(std::size_t kt, std::size_t c, Rng& rng) {
    Tensor k({kt, c, c});
    const double stddev = std::sqrt(1.0 / static_cast<double>(kt * c));
    for (double& v : k.data()) v = rng.normal(0.0, stddev);
    return k;
}

Tensor init_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor m({rows, cols});
    const double stddev = std::sqrt(1.0 / static_cast<double>(rows));
    for (double& v : m.data()) v = rng.normal(0.0, stddev);
    return m;
}

StageBlock build_stage(const ToyUNetSpec& spec, std::string name, std::size_t c_in,
                       std::size_t c_out, Rng& rng) {
    StageBlock block;
    block.name = std::move(name);
    block.resnet.convs.k1 = init_conv_kernel(3, 3, c_out, c_in, rng);
    block.resnet.convs.k2 = init_conv_kernel(3, 3, c_out, c_out, rng);
    block.resnet.convs.nonlinearity = Nonlinearity::silu;
    if (c_in != c_out) block.resnet.skip_mix = init_matrix(c_out, c_in, rng);

    block.temporal.kind = spec.temporal_kind;
    if (spec.temporal_kind == TemporalKind::attention) {
        block.temporal.attn.wq = init_matrix(c_out, c_out, rng);
        block.temporal.attn.wk = init_matrix(c_out, c_out, rng);
        block.temporal.attn.wv = init_matrix(c_out, c_out, rng);
        block.temporal.attn.wo = init_matrix(c_out, c_out, rng);
        block.temporal.attn_scale = 1.0 / std::sqrt(static_cast<double>(c_out));
    } else {
        block.temporal.time_k1 = init_time_kernel(3, c_out, rng);
        block.temporal.time_k2 = init_time_kernel(3, c_out, rng);
    }
    const double alpha = 0.25 + 0.5 * rng.uniform();
    block.temporal.alpha_theta = kAlphaTemperature * logit(alpha);

    if (spec.cross_attention) {
        CrossAttnBlock cross;
        cross.layer.wq = init_matrix(c_out, c_out, rng);
        cross.layer.wk = init_matrix(spec.cond_width, c_out, rng);
        cross.layer.wv = init_matrix(spec.cond_width, c_out, rng);
        cross.layer.wo = init_matrix(c_out, c_out, rng);
        cross.layer.head_count = spec.cross_attn_heads;
        cross.optimized = spec.optimized_cross_attention;
        block.cross = std::move(cross);
    }
    return block;
}

Tensor latent_to_tokens(const Tensor& x) {
    const std::size_t t = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    Tensor tokens({t * h * w, c});
    std::size_t row = 0;
    for (std::size_t tt = 0; tt < t; ++tt)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t z = 0; z < w; ++z, ++row)
                for (std::size_t cc = 0; cc < c; ++cc) tokens(row, cc) = x(tt, cc, y, z);
    return tokens;
}

Tensor tokens_to_latent(const Tensor& tokens, std::size_t t, std::size_t c, std::size_t h,
                        std::size_t w) {
    Tensor x({t, c, h, w});
    std::size_t row = 0;
    for (std::size_t tt = 0; tt < t; ++tt)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t z = 0; z < w; ++z, ++row)
                for (std::size_t cc = 0; cc < c; ++cc) x(tt, cc, y, z) = tokens(row, cc);
    return x;
}

Tensor resnet_forward(const ResnetUnit& unit, const Tensor& x) {
    Tensor h = conv2d(x, unit.convs.k1);
    if (unit.funnel) h = channel_mix(h, unit.funnel->f1);
    h = apply(unit.convs.nonlinearity, h);
    if (unit.funnel) h = channel_mix(h, unit.funnel->f2);
    h = conv2d(h, unit.convs.k2);
    if (unit.skip_mix.size() > 0) return h + channel_mix(x, unit.skip_mix);
    return h + x;
}

Tensor temporal_residual(const TemporalBlock& block, const Tensor& x) {
    if (block.kind == TemporalKind::conv) {
        const Tensor hidden = apply(Nonlinearity::silu, conv1d_time(x, block.time_k1));
        return conv1d_time(hidden, block.time_k2);
    }
    const std::size_t t = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    Tensor out({t, c, h, w});
    Tensor seq({t, c});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t z = 0; z < w; ++z) {
            for (std::size_t tt = 0; tt < t; ++tt)
                for (std::size_t cc = 0; cc < c; ++cc) seq(tt, cc) = x(tt, cc, y, z);
            const Tensor mixed = self_attention_forward(
                block.attn, seq, block.qk_funnel ? &*block.qk_funnel : nullptr,
                block.vo_funnel ? &*block.vo_funnel : nullptr, block.attn_scale);
            for (std::size_t tt = 0; tt < t; ++tt)
                for (std::size_t cc = 0; cc < c; ++cc) out(tt, cc, y, z) = mixed(tt, cc);
        }
    }
    return out;
}

// Effective update rule: x_s + ẑ·(1−α)·r_t.
Tensor temporal_forward(const TemporalBlock& block, const Tensor& x_s) {
    if (block.removed) return x_s;
    const Tensor r_t = temporal_residual(block, x_s);
    const double weight = block.gate * (1.0 - block.alpha());
    Tensor out = x_s;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += weight * r_t.data()[i];
    return out;
}

Tensor cross_forward(const CrossAttnBlock& block, const Tensor& x, const Tensor& cond) {
    const std::size_t t = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const Tensor tokens = latent_to_tokens(x);
    const Tensor mixed = block.optimized
                             ? optimized_cross_attention(block.layer, tokens, cond)
                             : full_cross_attention(block.layer, tokens, cond);
    return x + tokens_to_latent(mixed, t, c, h, w);
}

Tensor stage_forward(const StageBlock& block, Tensor x, const Tensor& cond,
                     const Tensor* skip) {
    x = resnet_forward(block.resnet, x);
    if (skip != nullptr) x += *skip;
    x = temporal_forward(block.temporal, x);
    if (block.cross) x = cross_forward(*block.cross, x, cond);
    return x;
}

std::vector<TemporalBlock*> temporal_blocks(ToyUNet& net) {
    std::vector<TemporalBlock*> blocks;
    for (auto* group : {&net.down, &net.mid, &net.up})
        for (StageBlock& stage : *group) blocks.push_back(&stage.temporal);
    return blocks;
}

std::vector<const TemporalBlock*> temporal_blocks(const ToyUNet& net) {
    std::vector<const TemporalBlock*> blocks;
    for (const auto* group : {&net.down, &net.mid, &net.up})
        for (const StageBlock& stage : *group) blocks.push_back(&stage.temporal);
    return blocks;
}

std::size_t halved(std::size_t v) { return (v + 1) / 2; }

}  // namespace

double TemporalBlock::alpha() const { return sigmoid(alpha_theta / kAlphaTemperature); }

std::size_t ToyUNetSpec::stage_width(std::size_t b) const {
    return stage_channels[std::min(b, stage_channels.size() - 1)];
}

void ToyUNetSpec::validate() const {
    if (frames < 1 || latent_channels < 1 || height < 1 || width < 1) {
        throw ArgumentError("toy UNet dims must be positive");
    }
    if (stage_channels.empty()) throw ArgumentError("stage_channels must not be empty");
    if (down_blocks < 1 || up_blocks < 1) throw ArgumentError("need down and up blocks");
    if (down_blocks != up_blocks) {
        throw ArgumentError("additive skips require up_blocks == down_blocks");
    }
    if (cross_attention) {
        if (cond_width < 1) throw ArgumentError("cond_width must be positive");
        for (std::size_t b = 0; b < down_blocks; ++b) {
            if (stage_width(b) % cross_attn_heads != 0) {
                throw ArgumentError("cross_attn_heads must divide every stage width");
            }
        }
    }
}

ToyUNetSpec ToyUNetSpec::svd_like() {
    ToyUNetSpec spec;
    spec.frames = 14;
    spec.latent_channels = 4;
    spec.height = 64;
    spec.width = 32;
    spec.stage_channels = {320, 640, 1280};
    spec.cond_width = 1024;
    return spec;
}

namespace {

const char* temporal_kind_name(TemporalKind kind) {
    return kind == TemporalKind::attention ? "attention" : "conv";
}

const char* multiscaling_name(Multiscaling ms) {
    switch (ms) {
        case Multiscaling::none: return "none";
        case Multiscaling::temporal: return "temporal";
        case Multiscaling::spatial: return "spatial";
        case Multiscaling::both: return "both";
    }
    return "none";
}

TemporalKind temporal_kind_from(const std::string& name) {
    if (name == "attention") return TemporalKind::attention;
    if (name == "conv") return TemporalKind::conv;
    throw ArgumentError("unknown temporal_kind: " + name);
}

Multiscaling multiscaling_from(const std::string& name) {
    if (name == "none") return Multiscaling::none;
    if (name == "temporal") return Multiscaling::temporal;
    if (name == "spatial") return Multiscaling::spatial;
    if (name == "both") return Multiscaling::both;
    throw ArgumentError("unknown multiscaling: " + name);
}

}  // namespace

std::string ToyUNetSpec::to_json() const {
    nlohmann::ordered_json j;
    j["frames"] = frames;
    j["latent_channels"] = latent_channels;
    j["height"] = height;
    j["width"] = width;
    j["stage_channels"] = stage_channels;
    j["down_blocks"] = down_blocks;
    j["mid_blocks"] = mid_blocks;
    j["up_blocks"] = up_blocks;
    j["temporal_kind"] = temporal_kind_name(temporal_kind);
    j["cross_attention"] = cross_attention;
    j["cond_width"] = cond_width;
    j["cross_attn_heads"] = cross_attn_heads;
    j["optimized_cross_attention"] = optimized_cross_attention;
    j["multiscaling"] = multiscaling_name(multiscaling);
    j["strided_temporal_resample"] = strided_temporal_resample;
    j["seed"] = seed;
    return j.dump(2);
}

ToyUNetSpec ToyUNetSpec::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw IoError("malformed toy UNet spec JSON");
    ToyUNetSpec spec;
    spec.frames = j.value("frames", spec.frames);
    spec.latent_channels = j.value("latent_channels", spec.latent_channels);
    spec.height = j.value("height", spec.height);
    spec.width = j.value("width", spec.width);
    if (j.contains("stage_channels"))
        spec.stage_channels = j["stage_channels"].get<std::vector<std::size_t>>();
    spec.down_blocks = j.value("down_blocks", spec.down_blocks);
    spec.mid_blocks = j.value("mid_blocks", spec.mid_blocks);
    spec.up_blocks = j.value("up_blocks", spec.up_blocks);
    if (j.contains("temporal_kind"))
        spec.temporal_kind = temporal_kind_from(j["temporal_kind"].get<std::string>());
    spec.cross_attention = j.value("cross_attention", spec.cross_attention);
    spec.cond_width = j.value("cond_width", spec.cond_width);
    spec.cross_attn_heads = j.value("cross_attn_heads", spec.cross_attn_heads);
    spec.optimized_cross_attention =
        j.value("optimized_cross_attention", spec.optimized_cross_attention);
    if (j.contains("multiscaling"))
        spec.multiscaling = multiscaling_from(j["multiscaling"].get<std::string>());
    spec.strided_temporal_resample =
        j.value("strided_temporal_resample", spec.strided_temporal_resample);
    spec.seed = j.value("seed", spec.seed);
    spec.validate();
    return spec;
}

ToyUNet build(const ToyUNetSpec& spec) {
    spec.validate();
    ToyUNet net;
    net.spec = spec;
    Rng rng(spec.seed);

    net.stem = init_conv_kernel(3, 3, spec.stage_width(0), spec.latent_channels, rng);
    for (std::size_t b = 0; b < spec.down_blocks; ++b) {
        const std::size_t c_in = b == 0 ? spec.stage_width(0) : spec.stage_width(b - 1);
        net.down.push_back(
            build_stage(spec, "down" + std::to_string(b), c_in, spec.stage_width(b), rng));
    }
    const std::size_t deep = spec.stage_width(spec.down_blocks - 1);
    for (std::size_t b = 0; b < spec.mid_blocks; ++b) {
        net.mid.push_back(build_stage(spec, "mid" + std::to_string(b), deep, deep, rng));
    }
    for (std::size_t j = 0; j < spec.up_blocks; ++j) {
        const std::size_t c_in =
            j == 0 ? deep : spec.stage_width(spec.down_blocks - j);
        const std::size_t c_out = spec.stage_width(spec.down_blocks - 1 - j);
        net.up.push_back(
            build_stage(spec, "up" + std::to_string(j), c_in, c_out, rng));
    }
    net.head = init_conv_kernel(3, 3, spec.latent_channels, spec.stage_width(0), rng);
    return net;
}

Tensor forward(const ToyUNet& net, const Tensor& latent, const Tensor& cond,
               ForwardTrace* trace) {
    const ToyUNetSpec& spec = net.spec;
    require_rank(latent, 4, "forward latent");
    require_finite(latent, "forward latent");
    if (latent.extent(0) != spec.frames || latent.extent(1) != spec.latent_channels ||
        latent.extent(2) != spec.height || latent.extent(3) != spec.width) {
        throw ShapeError("forward: latent shape does not match the spec");
    }
    if (spec.cross_attention) {
        require_rank(cond, 2, "forward cond token");
        if (cond.rows() != 1 || cond.cols() != spec.cond_width) {
            throw ShapeError("forward: conditioning token must be 1×cond_width");
        }
        require_finite(cond, "forward cond token");
    }

    const bool ms_temporal = spec.multiscaling == Multiscaling::temporal ||
                             spec.multiscaling == Multiscaling::both;
    const bool ms_spatial = spec.multiscaling == Multiscaling::spatial ||
                            spec.multiscaling == Multiscaling::both;

    auto record = [&](const char* name, const Tensor& x) {
        if (trace != nullptr) trace->shapes.emplace_back(name, x.shape());
    };

    Tensor x = conv2d(latent, net.stem);
    std::vector<Tensor> skips;
    std::vector<std::pair<std::size_t, std::size_t>> hw_stack;
    std::size_t frames_before_ms = 0;
    std::pair<std::size_t, std::size_t> hw_before_ms{0, 0};

    for (std::size_t b = 0; b < net.down.size(); ++b) {
        x = stage_forward(net.down[b], std::move(x), cond, nullptr);
        record(net.down[b].name.c_str(), x);
        skips.push_back(x);
        hw_stack.emplace_back(x.extent(2), x.extent(3));
        x = downsample_axis_mean(x, 2);
        x = downsample_axis_mean(x, 3);
        if (b == 0) {
            if (ms_temporal && x.extent(0) >= 2) {
                frames_before_ms = x.extent(0);
                x = spec.strided_temporal_resample ? downsample_axis_stride(x, 0)
                                                   : downsample_axis_mean(x, 0);
            }
            if (ms_spatial) {
                hw_before_ms = {x.extent(2), x.extent(3)};
                x = downsample_axis_mean(x, 2);
                x = downsample_axis_mean(x, 3);
            }
            if (trace != nullptr) trace->internal_frames = x.extent(0);
        }
    }

    for (const StageBlock& block : net.mid) {
        x = stage_forward(block, std::move(x), cond, nullptr);
        record(block.name.c_str(), x);
    }

    for (std::size_t j = 0; j < net.up.size(); ++j) {
        if (j + 1 == net.up.size()) {
            if (ms_spatial) {
                x = upsample_axis_nearest(x, 2, hw_before_ms.first);
                x = upsample_axis_nearest(x, 3, hw_before_ms.second);
            }
            if (ms_temporal && frames_before_ms > 0) {
                x = upsample_axis_nearest(x, 0, frames_before_ms);
            }
        }
        const auto [th, tw] = hw_stack.back();
        hw_stack.pop_back();
        x = upsample_axis_nearest(x, 2, th);
        x = upsample_axis_nearest(x, 3, tw);
        x = stage_forward(net.up[j], std::move(x), cond, &skips.back());
        skips.pop_back();
        record(net.up[j].name.c_str(), x);
    }

    x = conv2d(x, net.head);
    if (trace != nullptr && trace->internal_frames == 0) {
        trace->internal_frames = spec.frames;
    }
    if (!x.same_shape(latent)) throw ShapeError("forward: output shape drifted");
    return x;
}

std::size_t temporal_block_count(const ToyUNet& net) {
    return net.down.size() + net.mid.size() + net.up.size();
}

std::size_t inject_funnels(ToyUNet& net, double fun_factor, FunnelTargets targets) {
    std::size_t installed = 0;
    for (auto* group : {&net.down, &net.mid, &net.up}) {
        for (StageBlock& stage : *group) {
            if (targets.conv) {
                stage.resnet.funnel = csi_conv_pair(stage.resnet.convs, fun_factor);
                ++installed;
            }
            if (stage.temporal.kind == TemporalKind::attention && !stage.temporal.removed) {
                if (targets.qk) {
                    stage.temporal.qk_funnel =
                        csi_attention_qk(stage.temporal.attn, fun_factor);
                    ++installed;
                }
                if (targets.vo) {
                    stage.temporal.vo_funnel =
                        csi_value_output(stage.temporal.attn, fun_factor);
                    ++installed;
                }
            }
        }
    }
    return installed;
}

ToyUNet merge_funnels(const ToyUNet& net) {
    ToyUNet merged = net;
    for (auto* group : {&merged.down, &merged.mid, &merged.up}) {
        for (StageBlock& stage : *group) {
            if (stage.resnet.funnel) {
                stage.resnet.convs = merge_conv(stage.resnet.convs, *stage.resnet.funnel);
                stage.resnet.funnel.reset();
            }
            if (stage.temporal.qk_funnel) {
                stage.temporal.attn =
                    merge_attention_qk(stage.temporal.attn, *stage.temporal.qk_funnel);
                stage.temporal.qk_funnel.reset();
            }
            if (stage.temporal.vo_funnel) {
                stage.temporal.attn =
                    merge_attention_vo(stage.temporal.attn, *stage.temporal.vo_funnel);
                stage.temporal.vo_funnel.reset();
            }
        }
    }
    return merged;
}

void set_gates(ToyUNet& net, std::span<const double> gates) {
    auto blocks = temporal_blocks(net);
    if (gates.size() != blocks.size()) {
        throw ArgumentError("set_gates: expected " + std::to_string(blocks.size()) +
                            " gate values, got " + std::to_string(gates.size()));
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i]->gate = gates[i];
}

GateSample inject_gates(ToyUNet& net, std::span<const double> q, std::size_t n, Rng& rng) {
    auto blocks = temporal_blocks(net);
    const std::size_t big_n = blocks.size();
    if (q.size() != big_n) {
        throw ArgumentError("inject_gates: q must have one entry per temporal block");
    }
    if (n > big_n) throw ArgumentError("inject_gates: budget exceeds block count");

    GateSample sample;
    if (n == big_n) {
        sample.z.assign(big_n, 1);
        sample.p.assign(big_n, 1.0);
        sample.n = n;
    } else {
        const InclusionSolution sol = solve_inclusion(q, n);
        sample = sample_fixed_size(sol.p, n, rng);
    }
    for (std::size_t i = 0; i < big_n; ++i) {
        blocks[i]->gate = static_cast<double>(sample.z[i]);
    }
    return sample;
}

ToyUNet prune_to(const ToyUNet& net, std::span<const std::size_t> keep) {
    ToyUNet pruned = net;
    auto blocks = temporal_blocks(pruned);
    for (std::size_t idx : keep) {
        if (idx >= blocks.size()) throw ArgumentError("prune_to: block index out of range");
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const bool kept = std::find(keep.begin(), keep.end(), i) != keep.end();
        blocks[i]->removed = !kept;
        blocks[i]->gate = 1.0;
    }
    return pruned;
}

ToyUNet prune(const ToyUNet& net, std::span<const double> q, std::size_t n) {
    const std::size_t big_n = temporal_block_count(net);
    if (q.size() != big_n) {
        throw ArgumentError("prune: q must have one entry per temporal block");
    }
    if (n > big_n) throw ArgumentError("prune: budget exceeds block count");
    const std::vector<std::size_t> keep = select_top_n(q, n);
    return prune_to(net, keep);
}

namespace {

// Dimension cursor shared by the two count_flops overloads so the analytic
// and structural walks can never disagree on where each block runs.
struct StageDims {
    std::size_t t, h, w;
};

template <typename StageFn>
void walk_dims(const ToyUNetSpec& spec, StageFn&& per_stage) {
    const bool ms_temporal = spec.multiscaling == Multiscaling::temporal ||
                             spec.multiscaling == Multiscaling::both;
    const bool ms_spatial = spec.multiscaling == Multiscaling::spatial ||
                            spec.multiscaling == Multiscaling::both;
    StageDims dims{spec.frames, spec.height, spec.width};
    std::vector<std::pair<std::size_t, std::size_t>> hw_stack;
    std::size_t frames_before_ms = 0;
    std::pair<std::size_t, std::size_t> hw_before_ms{0, 0};

    for (std::size_t b = 0; b < spec.down_blocks; ++b) {
        per_stage("down", b, dims);
        hw_stack.emplace_back(dims.h, dims.w);
        dims.h = halved(dims.h);
        dims.w = halved(dims.w);
        if (b == 0) {
            if (ms_temporal && dims.t >= 2) {
                frames_before_ms = dims.t;
                dims.t = halved(dims.t);
            }
            if (ms_spatial) {
                hw_before_ms = {dims.h, dims.w};
                dims.h = halved(dims.h);
                dims.w = halved(dims.w);
            }
        }
    }
    for (std::size_t b = 0; b < spec.mid_blocks; ++b) per_stage("mid", b, dims);
    for (std::size_t j = 0; j < spec.up_blocks; ++j) {
        if (j + 1 == spec.up_blocks) {
            if (ms_spatial) {
                dims.h = hw_before_ms.first;
                dims.w = hw_before_ms.second;
            }
            if (ms_temporal && frames_before_ms > 0) dims.t = frames_before_ms;
        }
        dims.h = hw_stack.back().first;
        dims.w = hw_stack.back().second;
        hw_stack.pop_back();
        per_stage("up", j, dims);
    }
}

BlockFlops resnet_flops(const ResnetUnit& unit, const StageDims& dims, std::string name) {
    BlockFlops out;
    out.name = std::move(name);
    const Tensor& k1 = unit.convs.k1;
    const Tensor& k2 = unit.convs.k2;
    out.conv += flops::conv2d(k1.extent(0), k1.extent(1), k1.extent(3), k1.extent(2),
                              dims.h, dims.w, dims.t);
    if (unit.funnel) {
        const std::size_t positions = dims.t * dims.h * dims.w;
        out.conv += flops::linear(positions, unit.funnel->f1.cols(), unit.funnel->f1.rows());
        out.conv += flops::linear(positions, unit.funnel->f2.cols(), unit.funnel->f2.rows());
    }
    out.conv += flops::conv2d(k2.extent(0), k2.extent(1), k2.extent(3), k2.extent(2),
                              dims.h, dims.w, dims.t);
    if (unit.skip_mix.size() > 0) {
        out.conv += flops::conv2d(1, 1, unit.skip_mix.cols(), unit.skip_mix.rows(), dims.h,
                                  dims.w, dims.t);
    }
    return out;
}

void add_temporal_flops(BlockFlops& out, const TemporalBlock& block, const StageDims& dims) {
    if (block.removed) return;
    if (block.kind == TemporalKind::conv) {
        const Tensor& k1 = block.time_k1;
        const Tensor& k2 = block.time_k2;
        out.conv += flops::conv1d_time(k1.extent(0), k1.extent(2), k1.extent(1), dims.t,
                                       dims.h, dims.w);
        out.conv += flops::conv1d_time(k2.extent(0), k2.extent(2), k2.extent(1), dims.t,
                                       dims.h, dims.w);
        return;
    }
    const std::size_t sets = dims.h * dims.w;
    const std::size_t tokens = dims.t;
    std::uint64_t per_set = 0;
    // Query/key paths (through the funnel factors when unmerged).
    std::size_t q_width = block.attn.wq.cols();
    per_set += flops::linear(tokens, block.attn.wq.rows(), q_width) * 2;
    if (block.qk_funnel) {
        per_set += flops::linear(tokens, q_width, block.qk_funnel->reduced_width()) * 2;
        q_width = block.qk_funnel->reduced_width();
    }
    per_set += 2ull * tokens * tokens * q_width;  // logits
    // Value path.
    std::size_t v_width = block.attn.wv.cols();
    per_set += flops::linear(tokens, block.attn.wv.rows(), v_width);
    if (block.vo_funnel) {
        per_set += flops::linear(tokens, v_width, block.vo_funnel->reduced_width());
        v_width = block.vo_funnel->reduced_width();
    }
    per_set += 2ull * tokens * tokens * v_width;  // weighted mix
    if (block.vo_funnel) {
        per_set += flops::linear(tokens, v_width, block.vo_funnel->inner_width());
        v_width = block.vo_funnel->inner_width();
    }
    per_set += flops::linear(tokens, block.attn.wo.rows(), block.attn.wo.cols());
    out.attention += per_set * sets;
    out.softmax_ops += sets * tokens;
}

void add_cross_flops(BlockFlops& out, const CrossAttnBlock& block, const StageDims& dims) {
    const std::size_t tokens = dims.t * dims.h * dims.w;
    const flops::AttentionCost cost =
        block.optimized ? cross_attention_cost_optimized(block.layer)
                        : cross_attention_cost_full(block.layer, tokens, 1);
    out.attention += cost.flops;
    out.softmax_ops += cost.softmax_ops;
}

}  // namespace

FlopsReport count_flops(const ToyUNet& net) {
    const ToyUNetSpec& spec = net.spec;
    FlopsReport report;
    BlockFlops stem;
    stem.name = "stem";
    stem.conv = flops::conv2d(3, 3, spec.latent_channels, spec.stage_width(0), spec.height,
                              spec.width, spec.frames);
    report.blocks.push_back(stem);

    walk_dims(spec, [&](const char* group, std::size_t index, const StageDims& dims) {
        const StageBlock* stage = nullptr;
        if (std::string_view(group) == "down") stage = &net.down[index];
        else if (std::string_view(group) == "mid") stage = &net.mid[index];
        else stage = &net.up[index];
        BlockFlops out = resnet_flops(stage->resnet, dims, stage->name);
        add_temporal_flops(out, stage->temporal, dims);
        if (stage->cross) add_cross_flops(out, *stage->cross, dims);
        report.blocks.push_back(std::move(out));
    });

    BlockFlops head;
    head.name = "head";
    head.conv = flops::conv2d(3, 3, spec.stage_width(0), spec.latent_channels, spec.height,
                              spec.width, spec.frames);
    report.blocks.push_back(head);
    return report;
}

FlopsReport count_flops(const ToyUNetSpec& spec) {
    spec.validate();
    FlopsReport report;
    BlockFlops stem;
    stem.name = "stem";
    stem.conv = flops::conv2d(3, 3, spec.latent_channels, spec.stage_width(0), spec.height,
                              spec.width, spec.frames);
    report.blocks.push_back(stem);

    walk_dims(spec, [&](const char* group, std::size_t index, const StageDims& dims) {
        std::size_t c_in, c_out;
        std::string name = std::string(group) + std::to_string(index);
        if (std::string_view(group) == "down") {
            c_in = index == 0 ? spec.stage_width(0) : spec.stage_width(index - 1);
            c_out = spec.stage_width(index);
        } else if (std::string_view(group) == "mid") {
            c_in = c_out = spec.stage_width(spec.down_blocks - 1);
        } else {
            c_in = index == 0 ? spec.stage_width(spec.down_blocks - 1)
                              : spec.stage_width(spec.down_blocks - index);
            c_out = spec.stage_width(spec.down_blocks - 1 - index);
        }
        BlockFlops out;
        out.name = std::move(name);
        out.conv += flops::conv2d(3, 3, c_in, c_out, dims.h, dims.w, dims.t);
        out.conv += flops::conv2d(3, 3, c_out, c_out, dims.h, dims.w, dims.t);
        if (c_in != c_out) out.conv += flops::conv2d(1, 1, c_in, c_out, dims.h, dims.w, dims.t);
        if (spec.temporal_kind == TemporalKind::attention) {
            const flops::AttentionCost cost =
                flops::self_attention(dims.t, c_out, 1, dims.h * dims.w);
            out.attention += cost.flops;
            out.softmax_ops += cost.softmax_ops;
        } else {
            out.conv += 2 * flops::conv1d_time(3, c_out, c_out, dims.t, dims.h, dims.w);
        }
        if (spec.cross_attention) {
            const std::size_t tokens = dims.t * dims.h * dims.w;
            const flops::AttentionCost cost =
                spec.optimized_cross_attention
                    ? flops::cross_attention_optimized(spec.cond_width, c_out, c_out)
                    : flops::cross_attention_full(tokens, c_out, spec.cond_width, c_out,
                                                  c_out, 1, spec.cross_attn_heads);
            out.attention += cost.flops;
            out.softmax_ops += cost.softmax_ops;
        }
        report.blocks.push_back(std::move(out));
    });

    BlockFlops head;
    head.name = "head";
    head.conv = flops::conv2d(3, 3, spec.stage_width(0), spec.latent_channels, spec.height,
                              spec.width, spec.frames);
    report.blocks.push_back(head);
    return report;
}

namespace {

std::size_t stage_params(const StageBlock& stage) {
    std::size_t total = stage.resnet.convs.k1.size() + stage.resnet.convs.k2.size() +
                        stage.resnet.skip_mix.size();
    if (stage.resnet.funnel) {
        total += stage.resnet.funnel->f1.size() + stage.resnet.funnel->f2.size();
    }
    const TemporalBlock& tb = stage.temporal;
    if (!tb.removed) {
        if (tb.kind == TemporalKind::attention) {
            total += tb.attn.wq.size() + tb.attn.wk.size() + tb.attn.wv.size() +
                     tb.attn.wo.size();
            if (tb.qk_funnel) total += tb.qk_funnel->f1.size() + tb.qk_funnel->f2.size();
            if (tb.vo_funnel) total += tb.vo_funnel->f1.size() + tb.vo_funnel->f2.size();
        } else {
            total += tb.time_k1.size() + tb.time_k2.size();
        }
        total += 1;  // alpha
    }
    if (stage.cross) {
        const CrossAttnLayer& layer = stage.cross->layer;
        total += layer.wv.size() + layer.wo.size();
        if (!stage.cross->optimized) total += layer.wq.size() + layer.wk.size();
    }
    return total;
}

}  // namespace

std::size_t count_params(const ToyUNet& net) {
    std::size_t total = net.stem.size() + net.head.size();
    for (const auto* group : {&net.down, &net.mid, &net.up})
        for (const StageBlock& stage : *group) total += stage_params(stage);
    return total;
}

std::size_t count_params(const ToyUNetSpec& spec) {
    spec.validate();
    std::size_t total = 9 * spec.latent_channels * spec.stage_width(0) * 2;  // stem + head
    auto stage_total = [&](std::size_t c_in, std::size_t c_out) {
        std::size_t params = 9 * c_in * c_out + 9 * c_out * c_out;
        if (c_in != c_out) params += c_in * c_out;
        if (spec.temporal_kind == TemporalKind::attention) {
            params += 4 * c_out * c_out;
        } else {
            params += 2 * 3 * c_out * c_out;
        }
        params += 1;  // alpha
        if (spec.cross_attention) {
            params += spec.cond_width * c_out + c_out * c_out;  // wv + wo
            if (!spec.optimized_cross_attention) {
                params += c_out * c_out + spec.cond_width * c_out;  // wq + wk
            }
        }
        return params;
    };
    for (std::size_t b = 0; b < spec.down_blocks; ++b) {
        const std::size_t c_in = b == 0 ? spec.stage_width(0) : spec.stage_width(b - 1);
        total += stage_total(c_in, spec.stage_width(b));
    }
    const std::size_t deep = spec.stage_width(spec.down_blocks - 1);
    for (std::size_t b = 0; b < spec.mid_blocks; ++b) total += stage_total(deep, deep);
    for (std::size_t j = 0; j < spec.up_blocks; ++j) {
        const std::size_t c_in =
            j == 0 ? deep : spec.stage_width(spec.down_blocks - j);
        total += stage_total(c_in, spec.stage_width(spec.down_blocks - 1 - j));
    }
    return total;
}

namespace {

const char* funnel_target_name(FunnelTarget target) {
    switch (target) {
        case FunnelTarget::linear_pair: return "linear";
        case FunnelTarget::attention_qk: return "attention_qk";
        case FunnelTarget::attention_vo: return "attention_vo";
        case FunnelTarget::conv_pair: return "conv";
    }
    return "linear";
}

FunnelTarget funnel_target_from(const std::string& name) {
    if (name == "linear") return FunnelTarget::linear_pair;
    if (name == "attention_qk") return FunnelTarget::attention_qk;
    if (name == "attention_vo") return FunnelTarget::attention_vo;
    if (name == "conv") return FunnelTarget::conv_pair;
    throw IoError("unknown funnel target: " + name);
}

struct WeightSink {
    const std::filesystem::path& dir;
    nlohmann::ordered_json& tensors;

    void put(const std::string& name, const Tensor& t) {
        const std::string file = name + ".mvdt";
        write_mvdt(t, dir / file);
        tensors[name] = file;
    }
};

void save_funnel(WeightSink& sink, nlohmann::ordered_json& meta, const std::string& prefix,
                 const FunnelPair& funnel) {
    sink.put(prefix + ".f1", funnel.f1);
    sink.put(prefix + ".f2", funnel.f2);
    meta[prefix] = {{"fun_factor", funnel.fun_factor},
                    {"target", funnel_target_name(funnel.target)}};
}

FunnelPair load_funnel(const std::filesystem::path& dir, const nlohmann::json& tensors,
                       const nlohmann::json& meta, const std::string& prefix) {
    FunnelPair funnel;
    funnel.f1 = read_mvdt(dir / tensors.at(prefix + ".f1").get<std::string>());
    funnel.f2 = read_mvdt(dir / tensors.at(prefix + ".f2").get<std::string>());
    funnel.fun_factor = meta.at(prefix).at("fun_factor").get<double>();
    funnel.target = funnel_target_from(meta.at(prefix).at("target").get<std::string>());
    return funnel;
}

}  // namespace

void save_weights(const ToyUNet& net, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["format"] = "toyunet-weights";
    manifest["spec"] = nlohmann::ordered_json::parse(net.spec.to_json());
    nlohmann::ordered_json tensors = nlohmann::ordered_json::object();
    nlohmann::ordered_json funnels = nlohmann::ordered_json::object();
    nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
    WeightSink sink{dir, tensors};

    sink.put("stem", net.stem);
    sink.put("head", net.head);
    for (const auto* group : {&net.down, &net.mid, &net.up}) {
        for (const StageBlock& stage : *group) {
            const std::string& name = stage.name;
            sink.put(name + ".res.k1", stage.resnet.convs.k1);
            sink.put(name + ".res.k2", stage.resnet.convs.k2);
            if (stage.resnet.skip_mix.size() > 0) {
                sink.put(name + ".res.skip", stage.resnet.skip_mix);
            }
            if (stage.resnet.funnel) {
                save_funnel(sink, funnels, name + ".res.funnel", *stage.resnet.funnel);
            }
            const TemporalBlock& tb = stage.temporal;
            if (tb.kind == TemporalKind::attention) {
                sink.put(name + ".t.wq", tb.attn.wq);
                sink.put(name + ".t.wk", tb.attn.wk);
                sink.put(name + ".t.wv", tb.attn.wv);
                sink.put(name + ".t.wo", tb.attn.wo);
                if (tb.qk_funnel) save_funnel(sink, funnels, name + ".t.qk", *tb.qk_funnel);
                if (tb.vo_funnel) save_funnel(sink, funnels, name + ".t.vo", *tb.vo_funnel);
            } else {
                sink.put(name + ".t.k1", tb.time_k1);
                sink.put(name + ".t.k2", tb.time_k2);
            }
            if (stage.cross) {
                sink.put(name + ".x.wq", stage.cross->layer.wq);
                sink.put(name + ".x.wk", stage.cross->layer.wk);
                sink.put(name + ".x.wv", stage.cross->layer.wv);
                sink.put(name + ".x.wo", stage.cross->layer.wo);
            }
            nlohmann::ordered_json blk;
            blk["name"] = name;
            blk["alpha_theta"] = tb.alpha_theta;
            blk["gate"] = tb.gate;
            blk["removed"] = tb.removed;
            blk["attn_scale"] = tb.attn_scale;
            if (stage.cross) blk["cross_optimized"] = stage.cross->optimized;
            blocks.push_back(std::move(blk));
        }
    }
    manifest["tensors"] = std::move(tensors);
    manifest["funnels"] = std::move(funnels);
    manifest["blocks"] = std::move(blocks);

    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
}

ToyUNet load_weights(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("cannot read manifest: " + (dir / "manifest.json").string());
    nlohmann::json manifest = nlohmann::json::parse(in, nullptr, false);
    if (manifest.is_discarded() || manifest.value("format", "") != "toyunet-weights") {
        throw IoError("not a toy UNet weight bundle: " + dir.string());
    }
    ToyUNet net = build(ToyUNetSpec::from_json(manifest.at("spec").dump()));
    const nlohmann::json& tensors = manifest.at("tensors");
    const nlohmann::json& funnels = manifest.at("funnels");

    auto get = [&](const std::string& name) {
        return read_mvdt(dir / tensors.at(name).get<std::string>());
    };
    net.stem = get("stem");
    net.head = get("head");
    std::size_t block_index = 0;
    const nlohmann::json& blocks = manifest.at("blocks");
    for (auto* group : {&net.down, &net.mid, &net.up}) {
        for (StageBlock& stage : *group) {
            const std::string& name = stage.name;
            stage.resnet.convs.k1 = get(name + ".res.k1");
            stage.resnet.convs.k2 = get(name + ".res.k2");
            if (tensors.contains(name + ".res.skip")) {
                stage.resnet.skip_mix = get(name + ".res.skip");
            }
            if (funnels.contains(name + ".res.funnel")) {
                stage.resnet.funnel = load_funnel(dir, tensors, funnels, name + ".res.funnel");
            }
            TemporalBlock& tb = stage.temporal;
            if (tb.kind == TemporalKind::attention) {
                tb.attn.wq = get(name + ".t.wq");
                tb.attn.wk = get(name + ".t.wk");
                tb.attn.wv = get(name + ".t.wv");
                tb.attn.wo = get(name + ".t.wo");
                if (funnels.contains(name + ".t.qk")) {
                    tb.qk_funnel = load_funnel(dir, tensors, funnels, name + ".t.qk");
                }
                if (funnels.contains(name + ".t.vo")) {
                    tb.vo_funnel = load_funnel(dir, tensors, funnels, name + ".t.vo");
                }
            } else {
                tb.time_k1 = get(name + ".t.k1");
                tb.time_k2 = get(name + ".t.k2");
            }
            if (stage.cross) {
                stage.cross->layer.wq = get(name + ".x.wq");
                stage.cross->layer.wk = get(name + ".x.wk");
                stage.cross->layer.wv = get(name + ".x.wv");
                stage.cross->layer.wo = get(name + ".x.wo");
            }
            const nlohmann::json& blk = blocks.at(block_index++);
            tb.alpha_theta = blk.at("alpha_theta").get<double>();
            tb.gate = blk.at("gate").get<double>();
            tb.removed = blk.at("removed").get<bool>();
            tb.attn_scale = blk.at("attn_scale").get<double>();
            if (stage.cross && blk.contains("cross_optimized")) {
                stage.cross->optimized = blk.at("cross_optimized").get<bool>();
            }
        }
    }
    return net;
}

}  // namespace vdc

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vdc/attnopt.hpp"
#include "vdc/flops.hpp"
#include "vdc/funnel.hpp"
#include "vdc/pruning.hpp"
#include "vdc/rng.hpp"
#include "vdc/tensor.hpp"

namespace vdc {

enum class TemporalKind { attention, conv };
enum class Multiscaling { none, temporal, spatial, both };

/// Configuration of the forward-only toy spatio-temporal UNet: a stem conv,
/// `down_blocks` stages each followed by a 2× spatial downsample, mid stages,
/// mirrored up stages with additive skips, and a head conv back to the latent
/// width. Every stage is resnet → temporal block → cross-attention.
struct ToyUNetSpec {
    std::size_t frames = 14;
    std::size_t latent_channels = 4;
    std::size_t height = 32;
    std::size_t width = 16;
    std::vector<std::size_t> stage_channels = {16, 32, 64};
    std::size_t down_blocks = 4;
    std::size_t mid_blocks = 1;
    std::size_t up_blocks = 4;
    TemporalKind temporal_kind = TemporalKind::attention;
    bool cross_attention = true;
    std::size_t cond_width = 32;
    std::size_t cross_attn_heads = 1;
    bool optimized_cross_attention = false;
    Multiscaling multiscaling = Multiscaling::none;
    bool strided_temporal_resample = false;
    std::uint64_t seed = 0;

    /// Channel width of down-stage b (the last entry repeats for deep stages).
    std::size_t stage_width(std::size_t b) const;
    void validate() const;

    std::string to_json() const;
    static ToyUNetSpec from_json(const std::string& text);

    /// Preset mirroring the production model dimensions (channels
    /// 320/640/1280, 64×32 latent, 14 frames) for FLOPs bookkeeping only.
    static ToyUNetSpec svd_like();
};

struct FunnelTargets {
    bool qk = false;
    bool vo = false;
    bool conv = false;
};

struct ResnetUnit {
    ConvPair convs;                    // 3×3 c_in→c_out, silu, 3×3 c_out→c_out
    Tensor skip_mix;                   // 1×1 projection when c_in != c_out (else empty)
    std::optional<FunnelPair> funnel;  // unmerged conv funnel
};

struct TemporalBlock {
    TemporalKind kind = TemporalKind::attention;
    AttentionProjections attn;  // attention form, all c×c
    double attn_scale = 0.0;    // frozen at build time; survives funnel merging
    std::optional<FunnelPair> qk_funnel;
    std::optional<FunnelPair> vo_funnel;
    Tensor time_k1;  // conv form, (3, c, c) kernels over the frame axis
    Tensor time_k2;
    double alpha_theta = 0.0;  // mix weight α = sigmoid(alpha_theta / 0.1)
    double gate = 1.0;         // ẑ multiplier on the temporal residual
    bool removed = false;      // structurally pruned

    double alpha() const;
};

struct CrossAttnBlock {
    CrossAttnLayer layer;
    bool optimized = false;
};

struct StageBlock {
    std::string name;
    ResnetUnit resnet;
    TemporalBlock temporal;
    std::optional<CrossAttnBlock> cross;
};

struct ToyUNet {
    ToyUNetSpec spec;
    Tensor stem;  // (3, 3, ch0, latent_channels)
    std::vector<StageBlock> down;
    std::vector<StageBlock> mid;
    std::vector<StageBlock> up;
    Tensor head;  // (3, 3, latent_channels, ch0)
};

struct ForwardTrace {
    std::size_t internal_frames = 0;  // frame count between first down and last up block
    std::vector<std::pair<std::string, std::vector<std::size_t>>> shapes;
};

/// Deterministic construction: identical specs (including seed) produce
/// bit-identical weights.
ToyUNet build(const ToyUNetSpec& spec);

/// Forward pass. Output shape always equals the latent shape; cond is the
/// single conditioning token (1×cond_width).
Tensor forward(const ToyUNet& net, const Tensor& latent, const Tensor& cond,
               ForwardTrace* trace = nullptr);

std::size_t temporal_block_count(const ToyUNet& net);

/// Install CSI funnels on every matching layer pair; returns how many were
/// installed (0 with a no-op when nothing matches).
std::size_t inject_funnels(ToyUNet& net, double fun_factor, FunnelTargets targets);

/// Fold every installed funnel into its neighboring weights, producing a
/// structurally narrower net with an identical forward map.
ToyUNet merge_funnels(const ToyUNet& net);

/// Wire explicit ẑ values (one per temporal block, forward order).
void set_gates(ToyUNet& net, std::span<const double> gates);

/// Solve inclusion probabilities for q, sample a fixed-size gate vector, and
/// wire it in. n == N leaves every gate at 1.
GateSample inject_gates(ToyUNet& net, std::span<const double> q, std::size_t n, Rng& rng);

/// Keep only the temporal blocks listed in `keep` (forward order indices);
/// the rest are structurally deleted.
ToyUNet prune_to(const ToyUNet& net, std::span<const std::size_t> keep);

/// Keep the n temporal blocks of highest importance.
ToyUNet prune(const ToyUNet& net, std::span<const double> q, std::size_t n);

/// Analytic multiply-add counts per block for the configured spec (no
/// funnels, no pruning). Cheap; never allocates weights.
FlopsReport count_flops(const ToyUNetSpec& spec);

/// Counts for a built net as currently structured (funnels, merges and
/// pruning all reflected).
FlopsReport count_flops(const ToyUNet& net);

std::size_t count_params(const ToyUNet& net);
std::size_t count_params(const ToyUNetSpec& spec);

/// Weight bundle: a manifest.json naming per-block MVDT tensor files plus
/// scalar state (alpha, gates, flags).
void save_weights(const ToyUNet& net, const std::filesystem::path& dir);
ToyUNet load_weights(const std::filesystem::path& dir);

}  // namespace vdc

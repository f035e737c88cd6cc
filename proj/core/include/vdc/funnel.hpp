#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>

#include "vdc/nn.hpp"
#include "vdc/tensor.hpp"

namespace vdc {

/// Two consecutive linear layers y = w2 · σ(w1 · x) in the column-vector
/// convention: w1 is c_inner×c_in, w2 is c_out×c_inner.
struct LinearPair {
    Tensor w1;
    Tensor w2;
    Nonlinearity nonlinearity = Nonlinearity::identity;

    std::size_t inner_width() const { return w1.rows(); }
    void validate() const;
};

/// Self-attention projections in the row-vector convention (activations
/// left-multiply): wq, wk, wv are c_in×c_inner and wo is c_inner×c_out.
struct AttentionProjections {
    Tensor wq;
    Tensor wk;
    Tensor wv;
    Tensor wo;

    void validate() const;
};

/// Two chained 2-D convolutions with a nonlinearity between them.
/// k1 is (Kh, Kw, c_mid, c_in), k2 is (Kh, Kw, c_out, c_mid); stride 1,
/// zero padding preserving the spatial size.
struct ConvPair {
    Tensor k1;
    Tensor k2;
    Nonlinearity nonlinearity = Nonlinearity::silu;

    std::size_t mid_width() const { return k1.extent(2); }
    void validate() const;
};

enum class FunnelTarget { linear_pair, attention_qk, attention_vo, conv_pair };

/// Reduction-matrix pair inserted around the nonlinearity of a layer pair:
/// f1 is c'×c_inner, f2 is c_inner×c'. Mergeable into the neighboring
/// weights at inference without changing the function computed.
struct FunnelPair {
    Tensor f1;
    Tensor f2;
    double fun_factor = 1.0;
    FunnelTarget target = FunnelTarget::linear_pair;

    std::size_t inner_width() const { return f1.cols(); }
    std::size_t reduced_width() const { return f1.rows(); }
};

/// Rounding rule for the reduced width: max(1, round(ff · c_inner)), kept
/// strictly below c_inner whenever ff < 1 and c_inner >= 2.
std::size_t reduced_width(double fun_factor, std::size_t c_inner);

/// Coupled singular initialization from the truncated SVD of the effective
/// product of the surrounding weights (the nonlinearity is ignored).
FunnelPair csi_linear_pair(const LinearPair& pair, double fun_factor);

/// CSI for the query/key pair. The SVD target is the bilinear matrix
/// wq · wkᵀ; f2 holds Fq (c_inner×c') and f1 holds Fkᵀ (c'×c_inner).
FunnelPair csi_attention_qk(const AttentionProjections& proj, double fun_factor);

/// CSI for the value/output pair, treated as the column-convention linear
/// pair (w1 = wvᵀ, w2 = woᵀ) with identity nonlinearity.
FunnelPair csi_value_output(const AttentionProjections& proj, double fun_factor);

/// CSI for a convolution pair via the two matrix views of the kernels:
/// k1 flattened per input patch (c_mid × Kh·Kw·c_in), k2 flattened per
/// output collection (Kh·Kw·c_out × c_mid). f1/f2 act as 1×1 channel mixes.
FunnelPair csi_conv_pair(const ConvPair& pair, double fun_factor);

LinearPair merge_linear(const LinearPair& pair, const FunnelPair& funnel);
ConvPair merge_conv(const ConvPair& pair, const FunnelPair& funnel);
AttentionProjections merge_attention_qk(const AttentionProjections& proj,
                                        const FunnelPair& funnel);
AttentionProjections merge_attention_vo(const AttentionProjections& proj,
                                        const FunnelPair& funnel);

/// Low-rank split of a single weight matrix (truncated singular
/// decomposition baseline): w ≈ w2 · w1 with inner width
/// max(1, round(r · min(c_in, c_out))).
std::pair<Tensor, Tensor> truncated_layer_baseline(const Tensor& w, double r);

/// He-initialized funnel baseline: i.i.d. zero-mean Gaussians with variance
/// 2 / fan_in (fan_in = column count), deterministic given the seed.
FunnelPair he_init_baseline(std::size_t c_inner, std::size_t c_prime, std::uint64_t seed,
                            FunnelTarget target = FunnelTarget::linear_pair);

/// Kernel matrix views used by csi_conv_pair, exposed for verification.
Tensor conv_kernel_input_patch_matrix(const Tensor& kernel);       // c_out × (Kh·Kw·c_in)
Tensor conv_kernel_output_collection_matrix(const Tensor& kernel);  // (Kh·Kw·c_out) × c_in

// Forward evaluation helpers (x columns are input vectors: c_in×batch).
Tensor linear_pair_forward(const LinearPair& pair, const Tensor& x);
Tensor funneled_linear_forward(const LinearPair& pair, const FunnelPair& funnel,
                               const Tensor& x);
// Latent forms for convolution pairs ((T, C, H, W) input).
Tensor conv_pair_forward(const ConvPair& pair, const Tensor& latent);
Tensor funneled_conv_forward(const ConvPair& pair, const FunnelPair& funnel,
                             const Tensor& latent);
/// Single-head self-attention (row convention, x is L×c_in) with optional
/// funnels on the QK and VO pairs. scale 0 means 1/sqrt(wq cols); pass the
/// original value explicitly when evaluating merged (narrower) projections.
Tensor self_attention_forward(const AttentionProjections& proj, const Tensor& x,
                              const FunnelPair* qk = nullptr, const FunnelPair* vo = nullptr,
                              double scale = 0.0);
/// Pre-softmax similarity logits x · wq · wkᵀ · xᵀ (optionally funneled).
Tensor attention_logits(const AttentionProjections& proj, const Tensor& x,
                        const FunnelPair* qk = nullptr);

}  // namespace vdc

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vdc {

/// Analytic multiply-add accounting (1 multiply-add = 2 FLOPs). Softmax
/// evaluations are tracked as a separate op count because their cost model
/// differs from dense arithmetic.
namespace flops {

std::uint64_t conv2d(std::uint64_t kh, std::uint64_t kw, std::uint64_t c_in,
                     std::uint64_t c_out, std::uint64_t h, std::uint64_t w, std::uint64_t t);
std::uint64_t conv1d_time(std::uint64_t kt, std::uint64_t c_in, std::uint64_t c_out,
                          std::uint64_t t, std::uint64_t h, std::uint64_t w);
std::uint64_t linear(std::uint64_t positions, std::uint64_t c_in, std::uint64_t c_out);

struct AttentionCost {
    std::uint64_t flops = 0;
    std::uint64_t softmax_ops = 0;  // number of softmax row normalizations
};

/// Self-attention over `sets` independent token sequences of length `tokens`
/// and width `c` (projections q, k, v, o all c×c).
AttentionCost self_attention(std::uint64_t tokens, std::uint64_t c, std::uint64_t heads,
                             std::uint64_t sets);

/// Full cross-attention: queries from `tokens`×c_x, keys/values from
/// m×c_ctx context, head width total c_head, output c_out.
AttentionCost cross_attention_full(std::uint64_t tokens, std::uint64_t c_x,
                                   std::uint64_t c_ctx, std::uint64_t c_head,
                                   std::uint64_t c_out, std::uint64_t m,
                                   std::uint64_t heads);

/// Single-token rewrite: value and output projections run once, the result is
/// broadcast; query/key projections and all softmaxes disappear.
AttentionCost cross_attention_optimized(std::uint64_t c_ctx, std::uint64_t c_head,
                                        std::uint64_t c_out);

}  // namespace flops

struct BlockFlops {
    std::string name;
    std::uint64_t conv = 0;
    std::uint64_t linear = 0;
    std::uint64_t attention = 0;
    std::uint64_t softmax_ops = 0;

    std::uint64_t total() const { return conv + linear + attention; }
};

struct FlopsReport {
    std::vector<BlockFlops> blocks;

    std::uint64_t total() const;
    std::uint64_t total_softmax_ops() const;
    const BlockFlops* find(const std::string& name) const;
    std::string to_json() const;
};

}  // namespace vdc

#pragma once

#include <cstddef>
#include <cstdint>

#include "vdc/flops.hpp"
#include "vdc/tensor.hpp"

namespace vdc {

/// Cross-attention layer in the row-vector convention. Queries come from the
/// layer input (width c_x), keys and values from the context tokens
/// (width c_ctx): wq is c_x×c_head, wk/wv are c_ctx×c_head, wo is
/// c_head×c_out. Bias-free. scale is 1/sqrt(per-head width).
struct CrossAttnLayer {
    Tensor wq;
    Tensor wk;
    Tensor wv;
    Tensor wo;
    std::size_t head_count = 1;

    std::size_t head_width_total() const { return wq.cols(); }
    double scale() const;
    void validate() const;
};

/// Standard multi-head softmax cross-attention: x is L×c_x, context is
/// m×c_ctx, result is L×c_out.
Tensor full_cross_attention(const CrossAttnLayer& layer, const Tensor& x,
                            const Tensor& context);

/// Single-token rewrite: with one context token every query attends to that
/// token with weight exactly 1, so the softmax is a no-op and the query/key
/// projections are never touched. Computes wo-projected (context·wv) once and
/// broadcasts it across the L query positions.
Tensor optimized_cross_attention(const CrossAttnLayer& layer, const Tensor& x,
                                 const Tensor& context);

struct RewriteReport {
    std::size_t trials = 0;
    double max_abs_deviation = 0.0;
    std::uint64_t flops_full = 0;
    std::uint64_t flops_optimized = 0;
    std::uint64_t softmax_ops_full = 0;
    std::uint64_t softmax_ops_optimized = 0;
    bool pass = false;
};

/// Paired random evaluations of both paths on one layer; passes iff the
/// maximum absolute deviation stays within 1e-10.
RewriteReport rewrite_equivalence_check(const CrossAttnLayer& layer, std::size_t trials,
                                        std::uint64_t seed, std::size_t token_count = 16);

flops::AttentionCost cross_attention_cost_full(const CrossAttnLayer& layer,
                                               std::size_t token_count, std::size_t m);
flops::AttentionCost cross_attention_cost_optimized(const CrossAttnLayer& layer);

}  // namespace vdc

#include "vdc/attnopt.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "vdc/rng.hpp"

namespace vdc {

double CrossAttnLayer::scale() const {
    return 1.0 / std::sqrt(static_cast<double>(head_width_total() / head_count));
}

void CrossAttnLayer::validate() const {
    require_rank(wq, 2, "CrossAttnLayer.wq");
    require_rank(wk, 2, "CrossAttnLayer.wk");
    require_rank(wv, 2, "CrossAttnLayer.wv");
    require_rank(wo, 2, "CrossAttnLayer.wo");
    if (head_count == 0) throw ArgumentError("head_count must be positive");
    if (wq.cols() != wk.cols() || wk.cols() != wv.cols()) {
        throw ShapeError("CrossAttnLayer: projection widths disagree");
    }
    if (!wk.same_shape(wv)) throw ShapeError("CrossAttnLayer: wk and wv shapes differ");
    if (wo.rows() != wq.cols()) {
        throw ShapeError("CrossAttnLayer: output projection expects " +
                         std::to_string(wo.rows()) + " inputs, heads provide " +
                         std::to_string(wq.cols()));
    }
    if (wq.cols() % head_count != 0) {
        throw ShapeError("CrossAttnLayer: head width not divisible by head count");
    }
}

Tensor full_cross_attention(const CrossAttnLayer& layer, const Tensor& x,
                            const Tensor& context) {
    layer.validate();
    require_rank(x, 2, "full_cross_attention input");
    require_rank(context, 2, "full_cross_attention context");
    require_finite(x, "full_cross_attention input");
    require_finite(context, "full_cross_attention context");
    if (x.cols() != layer.wq.rows()) {
        throw ShapeError("full_cross_attention: input width " + std::to_string(x.cols()) +
                         " does not match wq rows " + std::to_string(layer.wq.rows()));
    }
    if (context.cols() != layer.wk.rows()) {
        throw ShapeError("full_cross_attention: context width " +
                         std::to_string(context.cols()) + " does not match wk rows " +
                         std::to_string(layer.wk.rows()));
    }
    const std::size_t l = x.rows();
    const std::size_t m = context.rows();
    if (m < 1) throw ShapeError("full_cross_attention: context must hold tokens");

    const Tensor q = matmul(x, layer.wq);
    const Tensor k = matmul(context, layer.wk);
    const Tensor v = matmul(context, layer.wv);
    const std::size_t heads = layer.head_count;
    const std::size_t d = layer.head_width_total() / heads;
    const double scale = layer.scale();

    Tensor mixed({l, layer.head_width_total()});
    std::vector<double> row(m);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t base = h * d;
        for (std::size_t i = 0; i < l; ++i) {
            double row_max = -1e300;
            for (std::size_t j = 0; j < m; ++j) {
                double logit = 0.0;
                for (std::size_t a = 0; a < d; ++a)
                    logit += q(i, base + a) * k(j, base + a);
                row[j] = logit * scale;
                row_max = std::max(row_max, row[j]);
            }
            double denom = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                row[j] = std::exp(row[j] - row_max);
                denom += row[j];
            }
            for (std::size_t j = 0; j < m; ++j) row[j] /= denom;
            for (std::size_t a = 0; a < d; ++a) {
                double acc = 0.0;
                for (std::size_t j = 0; j < m; ++j) acc += row[j] * v(j, base + a);
                mixed(i, base + a) = acc;
            }
        }
    }
    return matmul(mixed, layer.wo);
}

Tensor optimized_cross_attention(const CrossAttnLayer& layer, const Tensor& x,
                                 const Tensor& context) {
    layer.validate();
    require_rank(x, 2, "optimized_cross_attention input");
    require_rank(context, 2, "optimized_cross_attention context");
    require_finite(context, "optimized_cross_attention context");
    if (context.rows() != 1) {
        throw ArgumentError(
            "optimized_cross_attention: the rewrite is only valid for a single-token "
            "context, got " +
            std::to_string(context.rows()) + " tokens");
    }
    if (context.cols() != layer.wv.rows()) {
        throw ShapeError("optimized_cross_attention: context width mismatch");
    }
    // wq and wk are deliberately never touched.
    const Tensor value = matmul(context, layer.wv);  // 1 × c_head
    const Tensor y = matmul(value, layer.wo);        // 1 × c_out
    const std::size_t l = x.rows();
    Tensor out({l, y.cols()});
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) out(i, j) = y(0, j);
    return out;
}

RewriteReport rewrite_equivalence_check(const CrossAttnLayer& layer, std::size_t trials,
                                        std::uint64_t seed, std::size_t token_count) {
    if (trials < 1) throw ArgumentError("rewrite_equivalence_check: trials must be >= 1");
    layer.validate();
    Rng rng(seed);
    RewriteReport report;
    report.trials = trials;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        Tensor x({token_count, layer.wq.rows()});
        for (double& v : x.data()) v = rng.normal();
        Tensor context({1, layer.wk.rows()});
        for (double& v : context.data()) v = rng.normal();
        const Tensor reference = full_cross_attention(layer, x, context);
        const Tensor rewritten = optimized_cross_attention(layer, x, context);
        report.max_abs_deviation =
            std::max(report.max_abs_deviation, max_abs_diff(reference, rewritten));
    }
    const auto full_cost = cross_attention_cost_full(layer, token_count, 1);
    const auto optimized_cost = cross_attention_cost_optimized(layer);
    report.flops_full = full_cost.flops;
    report.flops_optimized = optimized_cost.flops;
    report.softmax_ops_full = full_cost.softmax_ops;
    report.softmax_ops_optimized = optimized_cost.softmax_ops;
    report.pass = report.max_abs_deviation <= 1e-10;
    return report;
}

flops::AttentionCost cross_attention_cost_full(const CrossAttnLayer& layer,
                                               std::size_t token_count, std::size_t m) {
    return flops::cross_attention_full(token_count, layer.wq.rows(), layer.wk.rows(),
                                       layer.head_width_total(), layer.wo.cols(), m,
                                       layer.head_count);
}

flops::AttentionCost cross_attention_cost_optimized(const CrossAttnLayer& layer) {
    return flops::cross_attention_optimized(layer.wk.rows(), layer.head_width_total(),
                                            layer.wo.cols());
}

}  // namespace vdc

#include "vdc/funnel.hpp"

#include <cmath>
#include <string>

#include "vdc/linalg.hpp"
#include "vdc/rng.hpp"

namespace vdc {

void LinearPair::validate() const {
    require_rank(w1, 2, "LinearPair.w1");
    require_rank(w2, 2, "LinearPair.w2");
    if (w2.cols() != w1.rows()) {
        throw ShapeError("LinearPair: inner dimensions disagree, w1 has " +
                         std::to_string(w1.rows()) + " rows, w2 has " +
                         std::to_string(w2.cols()) + " cols");
    }
    require_finite(w1, "LinearPair.w1");
    require_finite(w2, "LinearPair.w2");
}

void AttentionProjections::validate() const {
    require_rank(wq, 2, "AttentionProjections.wq");
    require_rank(wk, 2, "AttentionProjections.wk");
    require_rank(wv, 2, "AttentionProjections.wv");
    require_rank(wo, 2, "AttentionProjections.wo");
    if (!wq.same_shape(wk)) throw ShapeError("AttentionProjections: wq and wk shapes differ");
    if (wv.cols() != wo.rows()) {
        throw ShapeError("AttentionProjections: wv/wo inner dimensions disagree");
    }
    require_finite(wq, "wq");
    require_finite(wk, "wk");
    require_finite(wv, "wv");
    require_finite(wo, "wo");
}

void ConvPair::validate() const {
    require_rank(k1, 4, "ConvPair.k1");
    require_rank(k2, 4, "ConvPair.k2");
    if (k2.extent(3) != k1.extent(2)) {
        throw ShapeError("ConvPair: channel chaining broken, k1 outputs " +
                         std::to_string(k1.extent(2)) + ", k2 expects " +
                         std::to_string(k2.extent(3)));
    }
    require_finite(k1, "ConvPair.k1");
    require_finite(k2, "ConvPair.k2");
}

std::size_t reduced_width(double fun_factor, std::size_t c_inner) {
    if (!(fun_factor > 0.0) || fun_factor > 1.0) {
        throw ArgumentError("fun_factor must lie in (0, 1], got " +
                            std::to_string(fun_factor));
    }
    auto c_prime = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(fun_factor * static_cast<double>(c_inner))));
    if (c_prime > c_inner) c_prime = c_inner;
    if (fun_factor < 1.0 && c_inner >= 2 && c_prime == c_inner) c_prime = c_inner - 1;
    return c_prime;
}

namespace {

// CSI in the column convention: given a (c_inner×c_in) and b (c_out×c_inner),
// build f1/f2 from the truncated SVD of b·a so that b·f2·f1·a is the best
// rank-c' approximation of b·a whenever both factors have full inner rank.
FunnelPair csi_from_matrices(const Tensor& a, const Tensor& b, double fun_factor,
                             FunnelTarget target) {
    const std::size_t c_inner = a.rows();
    const std::size_t c_prime = reduced_width(fun_factor, c_inner);

    const SvdResult d = svd_of_product(b, a);
    const std::size_t available = d.s.size();
    const std::size_t k = std::min(c_prime, available);

    Tensor u_k({b.rows(), c_prime});
    Tensor v_k({a.cols(), c_prime});
    Tensor sqrt_s({c_prime, c_prime});
    for (std::size_t j = 0; j < k; ++j) {
        sqrt_s(j, j) = std::sqrt(d.s(j));
        for (std::size_t i = 0; i < b.rows(); ++i) u_k(i, j) = d.u(i, j);
        for (std::size_t i = 0; i < a.cols(); ++i) v_k(i, j) = d.v(i, j);
    }

    FunnelPair funnel;
    funnel.f2 = matmul(matmul(pinv(b), u_k), sqrt_s);
    funnel.f1 = matmul(sqrt_s, matmul(transpose(v_k), pinv(a)));
    funnel.fun_factor = fun_factor;
    funnel.target = target;
    return funnel;
}

void require_funnel_matches(const FunnelPair& funnel, FunnelTarget target,
                            std::size_t c_inner) {
    if (funnel.target != target) throw ShapeError("funnel targets a different pair kind");
    if (funnel.inner_width() != c_inner) {
        throw ShapeError("funnel inner width " + std::to_string(funnel.inner_width()) +
                         " does not match pair inner width " + std::to_string(c_inner));
    }
}

}  // namespace

FunnelPair csi_linear_pair(const LinearPair& pair, double fun_factor) {
    pair.validate();
    return csi_from_matrices(pair.w1, pair.w2, fun_factor, FunnelTarget::linear_pair);
}

FunnelPair csi_attention_qk(const AttentionProjections& proj, double fun_factor) {
    proj.validate();
    // Row convention: logits use wq·wkᵀ, which is the column-convention
    // product with w1 = wkᵀ and w2 = wq. Then f2 = Fq and f1 = Fkᵀ.
    return csi_from_matrices(transpose(proj.wk), proj.wq, fun_factor,
                             FunnelTarget::attention_qk);
}

FunnelPair csi_value_output(const AttentionProjections& proj, double fun_factor) {
    proj.validate();
    return csi_from_matrices(transpose(proj.wv), transpose(proj.wo), fun_factor,
                             FunnelTarget::attention_vo);
}

FunnelPair csi_conv_pair(const ConvPair& pair, double fun_factor) {
    pair.validate();
    const Tensor a = conv_kernel_input_patch_matrix(pair.k1);        // c_mid × (Kh·Kw·c_in)
    const Tensor b = conv_kernel_output_collection_matrix(pair.k2);  // (Kh·Kw·c_out) × c_mid
    return csi_from_matrices(a, b, fun_factor, FunnelTarget::conv_pair);
}

LinearPair merge_linear(const LinearPair& pair, const FunnelPair& funnel) {
    pair.validate();
    require_funnel_matches(funnel, FunnelTarget::linear_pair, pair.inner_width());
    return LinearPair{matmul(funnel.f1, pair.w1), matmul(pair.w2, funnel.f2),
                      pair.nonlinearity};
}

ConvPair merge_conv(const ConvPair& pair, const FunnelPair& funnel) {
    pair.validate();
    require_funnel_matches(funnel, FunnelTarget::conv_pair, pair.mid_width());
    const std::size_t kh = pair.k1.extent(0), kw = pair.k1.extent(1);
    const std::size_t c_mid = pair.k1.extent(2), c_in = pair.k1.extent(3);
    const std::size_t c_out = pair.k2.extent(2);
    const std::size_t c_prime = funnel.reduced_width();

    Tensor k1({kh, kw, c_prime, c_in});
    for (std::size_t a = 0; a < kh; ++a)
        for (std::size_t b = 0; b < kw; ++b)
            for (std::size_t jp = 0; jp < c_prime; ++jp)
                for (std::size_t i = 0; i < c_in; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c_mid; ++j)
                        acc += funnel.f1(jp, j) * pair.k1(a, b, j, i);
                    k1(a, b, jp, i) = acc;
                }

    const std::size_t kh2 = pair.k2.extent(0), kw2 = pair.k2.extent(1);
    Tensor k2({kh2, kw2, c_out, c_prime});
    for (std::size_t a = 0; a < kh2; ++a)
        for (std::size_t b = 0; b < kw2; ++b)
            for (std::size_t o = 0; o < c_out; ++o)
                for (std::size_t jp = 0; jp < c_prime; ++jp) {
                    double acc = 0.0;
                    for (std::size_t m = 0; m < c_mid; ++m)
                        acc += pair.k2(a, b, o, m) * funnel.f2(m, jp);
                    k2(a, b, o, jp) = acc;
                }
    return ConvPair{std::move(k1), std::move(k2), pair.nonlinearity};
}

AttentionProjections merge_attention_qk(const AttentionProjections& proj,
                                        const FunnelPair& funnel) {
    proj.validate();
    require_funnel_matches(funnel, FunnelTarget::attention_qk, proj.wq.cols());
    AttentionProjections out = proj;
    out.wq = matmul(proj.wq, funnel.f2);              // wq · Fq
    out.wk = matmul(proj.wk, transpose(funnel.f1));   // wk · Fk
    return out;
}

AttentionProjections merge_attention_vo(const AttentionProjections& proj,
                                        const FunnelPair& funnel) {
    proj.validate();
    require_funnel_matches(funnel, FunnelTarget::attention_vo, proj.wv.cols());
    AttentionProjections out = proj;
    out.wv = matmul(proj.wv, transpose(funnel.f1));
    out.wo = matmul(transpose(funnel.f2), proj.wo);
    return out;
}

std::pair<Tensor, Tensor> truncated_layer_baseline(const Tensor& w, double r) {
    require_rank(w, 2, "truncated_layer_baseline");
    require_finite(w, "truncated_layer_baseline");
    if (!(r > 0.0) || r > 1.0) {
        throw ArgumentError("rank factor must lie in (0, 1], got " + std::to_string(r));
    }
    const std::size_t c = std::min(w.rows(), w.cols());
    const auto rc = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(r * static_cast<double>(c))));
    const SvdResult d = svd(w);
    Tensor w1({rc, w.cols()});
    Tensor w2({w.rows(), rc});
    for (std::size_t j = 0; j < rc; ++j) {
        const double root = std::sqrt(d.s(j));
        for (std::size_t i = 0; i < w.cols(); ++i) w1(j, i) = root * d.v(i, j);
        for (std::size_t i = 0; i < w.rows(); ++i) w2(i, j) = d.u(i, j) * root;
    }
    return {std::move(w1), std::move(w2)};
}

FunnelPair he_init_baseline(std::size_t c_inner, std::size_t c_prime, std::uint64_t seed,
                            FunnelTarget target) {
    if (c_inner == 0 || c_prime == 0) throw ShapeError("he_init_baseline: zero width");
    Rng rng(seed);
    FunnelPair funnel;
    funnel.f1 = Tensor({c_prime, c_inner});
    funnel.f2 = Tensor({c_inner, c_prime});
    const double stddev_f1 = std::sqrt(2.0 / static_cast<double>(c_inner));
    const double stddev_f2 = std::sqrt(2.0 / static_cast<double>(c_prime));
    for (double& v : funnel.f1.data()) v = rng.normal(0.0, stddev_f1);
    for (double& v : funnel.f2.data()) v = rng.normal(0.0, stddev_f2);
    funnel.fun_factor = static_cast<double>(c_prime) / static_cast<double>(c_inner);
    funnel.target = target;
    return funnel;
}

Tensor conv_kernel_input_patch_matrix(const Tensor& kernel) {
    require_rank(kernel, 4, "conv kernel");
    const std::size_t kh = kernel.extent(0), kw = kernel.extent(1);
    const std::size_t c_out = kernel.extent(2), c_in = kernel.extent(3);
    Tensor out({c_out, kh * kw * c_in});
    for (std::size_t j = 0; j < c_out; ++j)
        for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t b = 0; b < kw; ++b)
                for (std::size_t i = 0; i < c_in; ++i)
                    out(j, (a * kw + b) * c_in + i) = kernel(a, b, j, i);
    return out;
}

Tensor conv_kernel_output_collection_matrix(const Tensor& kernel) {
    require_rank(kernel, 4, "conv kernel");
    const std::size_t kh = kernel.extent(0), kw = kernel.extent(1);
    const std::size_t c_out = kernel.extent(2), c_in = kernel.extent(3);
    Tensor out({kh * kw * c_out, c_in});
    for (std::size_t a = 0; a < kh; ++a)
        for (std::size_t b = 0; b < kw; ++b)
            for (std::size_t j = 0; j < c_out; ++j)
                for (std::size_t i = 0; i < c_in; ++i)
                    out((a * kw + b) * c_out + j, i) = kernel(a, b, j, i);
    return out;
}

Tensor linear_pair_forward(const LinearPair& pair, const Tensor& x) {
    return matmul(pair.w2, apply(pair.nonlinearity, matmul(pair.w1, x)));
}

Tensor funneled_linear_forward(const LinearPair& pair, const FunnelPair& funnel,
                               const Tensor& x) {
    const Tensor hidden = apply(pair.nonlinearity, matmul(funnel.f1, matmul(pair.w1, x)));
    return matmul(pair.w2, matmul(funnel.f2, hidden));
}

Tensor conv_pair_forward(const ConvPair& pair, const Tensor& latent) {
    return conv2d(apply(pair.nonlinearity, conv2d(latent, pair.k1)), pair.k2);
}

Tensor funneled_conv_forward(const ConvPair& pair, const FunnelPair& funnel,
                             const Tensor& latent) {
    Tensor hidden = channel_mix(conv2d(latent, pair.k1), funnel.f1);
    hidden = apply(pair.nonlinearity, hidden);
    return conv2d(channel_mix(hidden, funnel.f2), pair.k2);
}

Tensor attention_logits(const AttentionProjections& proj, const Tensor& x,
                        const FunnelPair* qk) {
    Tensor q = matmul(x, proj.wq);
    Tensor k = matmul(x, proj.wk);
    if (qk != nullptr) {
        q = matmul(q, qk->f2);
        k = matmul(k, transpose(qk->f1));
    }
    return matmul(q, transpose(k));
}

Tensor self_attention_forward(const AttentionProjections& proj, const Tensor& x,
                              const FunnelPair* qk, const FunnelPair* vo, double scale) {
    require_rank(x, 2, "self_attention_forward input");
    if (scale == 0.0) scale = 1.0 / std::sqrt(static_cast<double>(proj.wq.cols()));
    Tensor logits = attention_logits(proj, x, qk);
    const std::size_t l = logits.rows();
    for (std::size_t i = 0; i < l; ++i) {
        double row_max = logits(i, 0);
        for (std::size_t j = 1; j < l; ++j) row_max = std::max(row_max, logits(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < l; ++j) {
            logits(i, j) = std::exp(scale * logits(i, j) - scale * row_max);
            denom += logits(i, j);
        }
        for (std::size_t j = 0; j < l; ++j) logits(i, j) /= denom;
    }
    Tensor values = matmul(x, proj.wv);
    if (vo != nullptr) values = matmul(values, transpose(vo->f1));
    Tensor out = matmul(logits, values);
    if (vo != nullptr) out = matmul(out, transpose(vo->f2));
    return matmul(out, proj.wo);
}

}  // namespace vdc

#include "vdc/nn.hpp"

#include <cmath>
#include <string>

namespace vdc {

double apply(Nonlinearity f, double x) {
    switch (f) {
        case Nonlinearity::identity: return x;
        case Nonlinearity::relu: return x > 0.0 ? x : 0.0;
        case Nonlinearity::silu: return x / (1.0 + std::exp(-x));
    }
    return x;
}

Tensor apply(Nonlinearity f, const Tensor& x) {
    if (f == Nonlinearity::identity) return x;
    Tensor out = x;
    for (double& v : out.data()) v = apply(f, v);
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel) {
    require_rank(x, 4, "conv2d input");
    require_rank(kernel, 4, "conv2d kernel");
    const std::size_t t_len = x.extent(0), c_in = x.extent(1), h = x.extent(2), w = x.extent(3);
    const std::size_t kh = kernel.extent(0), kw = kernel.extent(1);
    const std::size_t c_out = kernel.extent(2);
    if (kernel.extent(3) != c_in) {
        throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.extent(3)) +
                         " input channels, latent has " + std::to_string(c_in));
    }
    const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh) / 2;
    const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw) / 2;

    Tensor out({t_len, c_out, h, w});
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t o = 0; o < c_out; ++o) {
            for (std::size_t i = 0; i < c_in; ++i) {
                for (std::size_t a = 0; a < kh; ++a) {
                    for (std::size_t b = 0; b < kw; ++b) {
                        const double kv = kernel(a, b, o, i);
                        if (kv == 0.0) continue;
                        const std::ptrdiff_t dh = static_cast<std::ptrdiff_t>(a) - ph;
                        const std::ptrdiff_t dw = static_cast<std::ptrdiff_t>(b) - pw;
                        const std::size_t h_lo = dh < 0 ? static_cast<std::size_t>(-dh) : 0;
                        const std::size_t h_hi =
                            dh > 0 ? h - static_cast<std::size_t>(dh) : h;
                        const std::size_t w_lo = dw < 0 ? static_cast<std::size_t>(-dw) : 0;
                        const std::size_t w_hi =
                            dw > 0 ? w - static_cast<std::size_t>(dw) : w;
                        for (std::size_t y = h_lo; y < h_hi; ++y) {
                            for (std::size_t z = w_lo; z < w_hi; ++z) {
                                out(t, o, y, z) +=
                                    kv * x(t, i, static_cast<std::size_t>(y + dh),
                                           static_cast<std::size_t>(z + dw));
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor conv1d_time(const Tensor& x, const Tensor& kernel) {
    require_rank(x, 4, "conv1d_time input");
    require_rank(kernel, 3, "conv1d_time kernel");
    const std::size_t t_len = x.extent(0), c_in = x.extent(1), h = x.extent(2), w = x.extent(3);
    const std::size_t kt = kernel.extent(0), c_out = kernel.extent(1);
    if (kernel.extent(2) != c_in) {
        throw ShapeError("conv1d_time: kernel expects " + std::to_string(kernel.extent(2)) +
                         " input channels, latent has " + std::to_string(c_in));
    }
    const std::ptrdiff_t pt = static_cast<std::ptrdiff_t>(kt) / 2;

    Tensor out({t_len, c_out, h, w});
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t a = 0; a < kt; ++a) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + a) - pt;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
            for (std::size_t o = 0; o < c_out; ++o) {
                for (std::size_t i = 0; i < c_in; ++i) {
                    const double kv = kernel(a, o, i);
                    if (kv == 0.0) continue;
                    for (std::size_t y = 0; y < h; ++y)
                        for (std::size_t z = 0; z < w; ++z)
                            out(t, o, y, z) += kv * x(static_cast<std::size_t>(src), i, y, z);
                }
            }
        }
    }
    return out;
}

Tensor channel_mix(const Tensor& x, const Tensor& m) {
    require_rank(x, 4, "channel_mix input");
    require_rank(m, 2, "channel_mix matrix");
    const std::size_t t_len = x.extent(0), c_in = x.extent(1), h = x.extent(2), w = x.extent(3);
    if (m.cols() != c_in) {
        throw ShapeError("channel_mix: matrix expects " + std::to_string(m.cols()) +
                         " channels, latent has " + std::to_string(c_in));
    }
    const std::size_t c_new = m.rows();
    Tensor out({t_len, c_new, h, w});
    for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t j = 0; j < c_new; ++j)
            for (std::size_t c = 0; c < c_in; ++c) {
                const double mv = m(j, c);
                if (mv == 0.0) continue;
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t z = 0; z < w; ++z) out(t, j, y, z) += mv * x(t, c, y, z);
            }
    return out;
}

namespace {

// Map a rank-R tensor to (outer, axis, inner) so resampling code is
// layout-agnostic.
struct AxisView {
    std::size_t outer, len, inner;
};

AxisView axis_view(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) throw ShapeError("axis out of range");
    AxisView v{1, x.extent(axis), 1};
    for (std::size_t i = 0; i < axis; ++i) v.outer *= x.extent(i);
    for (std::size_t i = axis + 1; i < x.rank(); ++i) v.inner *= x.extent(i);
    return v;
}

std::vector<std::size_t> with_axis(const Tensor& x, std::size_t axis, std::size_t len) {
    std::vector<std::size_t> shape = x.shape();
    shape[axis] = len;
    return shape;
}

}  // namespace

Tensor downsample_axis_mean(const Tensor& x, std::size_t axis) {
    const AxisView v = axis_view(x, axis);
    const std::size_t out_len = (v.len + 1) / 2;
    Tensor out(with_axis(x, axis, out_len));
    const double* src = x.data().data();
    double* dst = out.data().data();
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t j = 0; j < out_len; ++j) {
            const std::size_t a = 2 * j;
            const bool paired = a + 1 < v.len;
            const double* s0 = src + (o * v.len + a) * v.inner;
            const double* s1 = s0 + v.inner;
            double* d = dst + (o * out_len + j) * v.inner;
            for (std::size_t i = 0; i < v.inner; ++i) {
                d[i] = paired ? 0.5 * (s0[i] + s1[i]) : s0[i];
            }
        }
    }
    return out;
}

Tensor downsample_axis_stride(const Tensor& x, std::size_t axis) {
    const AxisView v = axis_view(x, axis);
    const std::size_t out_len = (v.len + 1) / 2;
    Tensor out(with_axis(x, axis, out_len));
    const double* src = x.data().data();
    double* dst = out.data().data();
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t j = 0; j < out_len; ++j) {
            const double* s = src + (o * v.len + 2 * j) * v.inner;
            double* d = dst + (o * out_len + j) * v.inner;
            for (std::size_t i = 0; i < v.inner; ++i) d[i] = s[i];
        }
    return out;
}

Tensor upsample_axis_nearest(const Tensor& x, std::size_t axis, std::size_t target) {
    const AxisView v = axis_view(x, axis);
    if (target > 2 * v.len) {
        throw ShapeError("upsample_axis_nearest: target " + std::to_string(target) +
                         " exceeds twice the source extent " + std::to_string(v.len));
    }
    Tensor out(with_axis(x, axis, target));
    const double* src = x.data().data();
    double* dst = out.data().data();
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t j = 0; j < target; ++j) {
            const double* s = src + (o * v.len + j / 2) * v.inner;
            double* d = dst + (o * target + j) * v.inner;
            for (std::size_t i = 0; i < v.inner; ++i) d[i] = s[i];
        }
    return out;
}

}  // namespace vdc

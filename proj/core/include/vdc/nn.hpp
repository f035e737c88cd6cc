#pragma once

#include <cstddef>

#include "vdc/tensor.hpp"

namespace vdc {

enum class Nonlinearity { identity, relu, silu };

double apply(Nonlinearity f, double x);
Tensor apply(Nonlinearity f, const Tensor& x);

/// 2-D convolution over a (T, C, H, W) latent, one frame at a time.
/// kernel is (Kh, Kw, c_out, c_in); stride 1, zero padding keeps H and W.
Tensor conv2d(const Tensor& x, const Tensor& kernel);

/// 1-D convolution along the frame axis of a (T, C, H, W) latent.
/// kernel is (Kt, c_out, c_in); stride 1, zero padding keeps T.
Tensor conv1d_time(const Tensor& x, const Tensor& kernel);

/// Per-position channel remap of a (T, C, H, W) latent: out channel j is
/// Σ_c m(j, c) · x(t, c, h, w). Equivalent to a 1×1 convolution with
/// matrix m of shape (c_new, C).
Tensor channel_mix(const Tensor& x, const Tensor& m);

/// Halve one axis by averaging adjacent pairs; an odd trailing element passes
/// through unchanged, so the result extent is ceil(extent / 2).
Tensor downsample_axis_mean(const Tensor& x, std::size_t axis);

/// Halve one axis by keeping every second element (stride-2 selection).
Tensor downsample_axis_stride(const Tensor& x, std::size_t axis);

/// Nearest-neighbor upsample: repeat each element twice along the axis, then
/// truncate to `target` elements.
Tensor upsample_axis_nearest(const Tensor& x, std::size_t axis, std::size_t target);

}  // namespace vdc

#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "vdc/tensor.hpp"

namespace vdc {

/// A chunk of video frames (T, C, H, W) with values in [0, 1]; C is 1 or 3.
struct Clip {
    Tensor frames;
    double native_fps = 25.0;

    void validate() const;
};

/// Singular-value motion summary of a clip: the clip is grayscaled,
/// downsampled, flattened to a T×(H'·W') matrix, and the area under the
/// normalized cumulative sum of its singular values is taken. A static clip
/// has rank 1 and area exactly 1; more motion spreads the spectrum and
/// lowers the area.
struct MotionDescriptor {
    std::vector<double> singular_values;
    double area = 0.0;
    std::size_t bucket_height = 0;
    std::size_t bucket_width = 0;
};

MotionDescriptor motion_descriptor(const Clip& clip, std::size_t height = 128,
                                   std::size_t width = 64);

/// Keep every k-th frame starting at 0 (no interpolation) and divide the
/// native fps by k. The stride must lie in 1..4.
Clip fps_stride(const Clip& clip, std::size_t k, std::size_t target_frames = 14);

/// Monotone linear rescale from the area to an integer bucket id. Both
/// orientations are available: with invert set (default) more motion
/// (smaller area) maps to a higher id.
struct BucketConfig {
    bool invert = true;
    double area_lo = 0.5;
    double area_hi = 1.0;
    int id_min = 0;
    int id_max = 255;
};

int motion_bucket_id(double area, const BucketConfig& config = {});

/// BT.601 luma (0.299, 0.587, 0.114) for 3-channel clips; identity for 1.
Tensor grayscale(const Tensor& frames);

/// Area-weighted box resampling of the spatial axes to (height, width).
/// Linear in the input and exact on constants.
Tensor resample_area(const Tensor& frames, std::size_t height, std::size_t width);

/// Load a clip from an MVDT tensor file ((T,C,H,W) or (T,H,W)) or from a
/// directory of raw 8-bit RGB frames (width·height·3 bytes, row-major,
/// lexicographic file order) with a meta.json sidecar:
/// {"width":..,"height":..,"fps":..}.
Clip load_clip(const std::filesystem::path& path, double fallback_fps = 25.0);

}  // namespace vdc

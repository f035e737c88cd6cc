#pragma once

#include <filesystem>
#include <string>

#include "vdc/tensor.hpp"

namespace vdc {

/// MVDT container: bytes 0-3 magic 4D 56 44 54, u32 little-endian rank,
/// rank × u32 little-endian extents, then f64 little-endian values in
/// row-major order.
void write_mvdt(const Tensor& t, const std::filesystem::path& path);
Tensor read_mvdt(const std::filesystem::path& path);

/// JSON form for small tensors: {"shape":[...],"data":[...]}.
std::string tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const std::string& text);

}  // namespace vdc

#pragma once

#include <filesystem>

#include "vwam/autodiff/tensor.hpp"

namespace vwam::io {

// Images are channel-major [3, H, W] with values in [0, 1].
using Image = ad::Tensor<float>;

// 8-bit RGB. Values are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Image& image);

// Gray, palette and alpha inputs are converted to 8-bit RGB.
Image read_png(const std::filesystem::path& path);

}  // namespace vwam::io

#pragma once

#include <filesystem>
#include <vector>

#include "ctgen/core/tensor.hpp"

namespace ctgen {

/// Writes a [H,W] tensor with values in [0,1] as an 8-bit grayscale PNG.
/// Values outside [0,1] are clamped.
void write_png_gray(const std::filesystem::path& path, const Tensor& image);

/// Tiles images (each [H,W], same size) into a grid with `cols` columns and
/// writes a single PNG. A 2-pixel white separator is drawn between tiles.
void write_png_grid(const std::filesystem::path& path, const std::vector<Tensor>& images, int64_t cols);

}  // namespace ctgen

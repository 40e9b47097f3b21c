#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "scg/tensor.hpp"

namespace scg {

// The one mapping between 8-bit pixels and tensor values:
// byte b <-> b / 127.5 - 1, so 0 -> -1 and 255 -> +1.
double byte_to_unit(std::uint8_t b);
// Clamps to [-1, 1] and rounds to the nearest byte.
std::uint8_t unit_to_byte(double v);

// 8-bit interleaved raster, channels 1 (gray) or 3 (RGB).
struct Raster {
  std::size_t width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> pixels;
};

Raster read_png_raster(const std::filesystem::path& path);
void write_png_raster(const std::filesystem::path& path, const Raster& raster);

// PNG <-> [C, H, W] in [-1, 1]. Alpha channels are dropped; palette and
// 16-bit files are converted to 8-bit gray or RGB.
Tensor read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Tensor& image);

Raster to_raster(const Tensor& image);
Tensor from_raster(const Raster& raster);

// Places [1|3, H, W] images side by side; gray images are replicated to RGB
// when any input is colour.
Tensor hconcat_images(const std::vector<Tensor>& images);

}  // namespace scg

#include "scg/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

#include "scg/error.hpp"

namespace scg {

double byte_to_unit(std::uint8_t b) { return static_cast<double>(b) / 127.5 - 1.0; }

std::uint8_t unit_to_byte(double v) {
  const double c = std::clamp(std::isnan(v) ? -1.0 : v, -1.0, 1.0);
  return static_cast<std::uint8_t>(std::lround((c + 1.0) * 127.5));
}

Raster read_png_raster(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  // Alpha is dropped; everything else maps to 8-bit gray or RGB.
  const bool colour = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Raster r;
  r.width = image.width;
  r.height = image.height;
  r.channels = colour ? 3 : 1;
  r.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, r.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return r;
}

void write_png_raster(const std::filesystem::path& path, const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw ContractError("PNG output needs 1 or 3 channels");
  if (r.width == 0 || r.height == 0 || r.pixels.size() != r.width * r.height * r.channels) {
    throw ContractError("raster size does not match its dimensions");
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(r.width);
  image.height = static_cast<png_uint_32>(r.height);
  image.format = r.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const std::string tmp = path.string() + ".tmp";
  if (!png_image_write_to_file(&image, tmp.c_str(), 0, r.pixels.data(), 0, nullptr)) {
    std::filesystem::remove(tmp);
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
  std::filesystem::rename(tmp, path);
}

Raster to_raster(const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw DimensionError("image must be [1|3,H,W], got " + shape_str(image.shape()));
  }
  Raster r;
  r.channels = image.dim(0);
  r.height = image.dim(1);
  r.width = image.dim(2);
  r.pixels.resize(r.channels * r.height * r.width);
  auto d = image.data();
  const std::size_t plane = r.height * r.width;
  for (std::size_t c = 0; c < r.channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) r.pixels[i * r.channels + c] = unit_to_byte(d[c * plane + i]);
  return r;
}

Tensor from_raster(const Raster& r) {
  const std::size_t plane = r.height * r.width;
  std::vector<double> out(r.channels * plane);
  for (std::size_t c = 0; c < r.channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = byte_to_unit(r.pixels[i * r.channels + c]);
  return Tensor::from_data({r.channels, r.height, r.width}, std::move(out));
}

Tensor read_png(const std::filesystem::path& path) { return from_raster(read_png_raster(path)); }

void write_png(const std::filesystem::path& path, const Tensor& image) { write_png_raster(path, to_raster(image)); }

Tensor hconcat_images(const std::vector<Tensor>& images) {
  if (images.empty()) throw ContractError("hconcat_images needs at least one image");
  std::size_t channels = 1, width = 0;
  const std::size_t height = images.front().dim(1);
  for (const auto& im : images) {
    if (im.rank() != 3 || (im.dim(0) != 1 && im.dim(0) != 3) || im.dim(1) != height) {
      throw DimensionError("hconcat_images: images must be [1|3,H,W] with equal heights");
    }
    channels = std::max(channels, im.dim(0));
    width += im.dim(2);
  }
  std::vector<double> out(channels * height * width);
  std::size_t x0 = 0;
  for (const auto& im : images) {
    const std::size_t w = im.dim(2);
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t src_c = im.dim(0) == 1 ? 0 : c;
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < w; ++x)
          out[(c * height + y) * width + x0 + x] = im.at({src_c, y, x});
    }
    x0 += w;
  }
  return Tensor::from_data({channels, height, width}, std::move(out));
}

}  // namespace scg

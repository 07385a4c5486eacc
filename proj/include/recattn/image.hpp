#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "recattn/tensor.hpp"

namespace recattn {

/// Planar channels x height x width image with values in [0, 1].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), values(c * h * w, fill) {}

  std::size_t pixels() const { return height * width; }
  double& at(std::size_t c, std::size_t r, std::size_t x) { return values[(c * height + r) * width + x]; }
  double at(std::size_t c, std::size_t r, std::size_t x) const {
    return values[(c * height + r) * width + x];
  }

  bool operator==(const Image&) const = default;
};

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// round(255 * clamp(v, 0, 1)); the one quantization rule used for files and metrics.
std::uint8_t quantize(double v);

Tensor to_tensor(const Image& image);
Image from_tensor(const Tensor& t);

/// Bilinear resampling (half-pixel centers) to the given size.
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);
/// Horizontal mirror: pixel (r, c) <-> (r, W - 1 - c).
Image flip_horizontal(const Image& image);

/// Reads 8-bit PGM (P5), PPM (P6) or PNG. Values are scaled to [0, 1].
Image read_image(const std::filesystem::path& path);

/// Writes by extension: .pgm (1 channel), .ppm (3 channels) or .png (1 or 3).
void write_image(const Image& image, const std::filesystem::path& path);

std::vector<unsigned char> encode_pnm(const Image& image);
Image decode_pnm(const std::vector<unsigned char>& bytes, const std::string& origin);

}  // namespace recattn

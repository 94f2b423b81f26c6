#pragma once

// 8-bit images, PNG/PGM/PPM codecs and tensor conversion.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "inpaint/tensor.hpp"

namespace inpaint {

/// Interleaved 8-bit pixels, row-major, 1 (gray) or 3 (RGB) channels.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

/// Alpha is dropped, palettes expand to RGB. Only 8-bit samples are accepted;
/// other depths raise UnsupportedFormatError, corrupt data FormatError.
Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Image& image);

/// Binary P5 (gray) / P6 (RGB), maxval 255.
Image decode_pnm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pnm(const Image& image);

/// Format chosen by content on load and by extension (.png, .pgm, .ppm) on save.
Image load_image(const std::filesystem::path& path);
void save_image(const Image& image, const std::filesystem::path& path);

/// Luminance 0.299 R + 0.587 G + 0.114 B, rounded.
Image to_gray(const Image& rgb);
/// Gray images are replicated to three channels.
Image to_rgb(const Image& image);

/// Center crop to a square, then bilinear resample to size x size.
Image square_resize(const Image& image, std::size_t size);

/// [1,C,H,W] with 0..255 mapped linearly onto [lo, hi].
Tensor image_to_tensor(const Image& image, double lo = -1.0, double hi = 1.0);
/// Inverse of image_to_tensor for a [1,C,H,W] or [C,H,W] tensor; clamps and rounds.
Image tensor_to_image(const Tensor& t, double lo = -1.0, double hi = 1.0);

/// Binary [1,1,H,W] tensor from an image (gray > 127 -> 1) and back (1 -> 255).
Tensor binary_from_image(const Image& image);
Image binary_to_image(const Tensor& mask);

}  // namespace inpaint

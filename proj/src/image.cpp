#include "inpaint/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "inpaint/error.hpp"

namespace inpaint {

namespace {

struct PngReadState {
  const std::uint8_t* data = nullptr;
  std::size_t size = 0;
  std::size_t offset = 0;
  char message[256] = {};
};

void png_read_bytes(png_structp png, png_bytep out, png_size_t n) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->offset + n > st->size) {
    st->offset = st->size;
    png_error(png, "unexpected end of file");
  }
  std::memcpy(out, st->data + st->offset, n);
  st->offset += n;
}

void png_on_error(png_structp png, png_const_charp msg) {
  auto* st = static_cast<PngReadState*>(png_get_error_ptr(png));
  std::snprintf(st->message, sizeof st->message, "%s", msg);
  png_longjmp(png, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

enum class PngStatus { ok, corrupt, unsupported_depth, unsupported_other };

// Plain C-style body: nothing with a destructor is created after setjmp.
PngStatus png_decode_raw(PngReadState& st, Image& out, int& bad_depth) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &st, png_on_error, png_on_warning);
  if (!png) return PngStatus::unsupported_other;
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return PngStatus::unsupported_other;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return PngStatus::corrupt;
  }
  png_set_read_fn(png, &st, png_read_bytes);
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8) {
    bad_depth = depth;
    png_destroy_read_struct(&png, &info, nullptr);
    return PngStatus::unsupported_depth;
  }
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.channels = png_get_channels(png, info);
  out.pixels.assign(out.width * out.height * out.channels, 0);
  rows.resize(out.height);
  for (std::size_t y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + y * out.width * out.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return PngStatus::ok;
}

void png_write_bytes(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void png_flush_noop(png_structp) {}

bool png_encode_raw(const Image& image, std::vector<std::uint8_t>& out, PngReadState& st) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &st, png_on_error, png_on_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(image.height);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &out, png_write_bytes, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  for (std::size_t y = 0; y < image.height; ++y)
    rows[y] = const_cast<png_bytep>(image.pixels.data() + y * image.width * image.channels);
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

void require_valid(const Image& image, const char* where) {
  if (image.width == 0 || image.height == 0 || (image.channels != 1 && image.channels != 3) ||
      image.pixels.size() != image.width * image.height * image.channels)
    throw ShapeError(std::string(where) + ": image must be non-empty with 1 or 3 channels");
}

class PnmReader {
 public:
  explicit PnmReader(std::span<const std::uint8_t> b) : b_(b) {}

  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }
  std::size_t number(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > (1u << 24)) throw FormatError(std::string("PNM ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("PNM: expected ") + what, pos_);
    return v;
  }
  std::size_t pos_ = 0;
  std::span<const std::uint8_t> b_;
};

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw FormatError("not a PNG file (bad signature)", 0);
  PngReadState st;
  st.data = bytes.data();
  st.size = bytes.size();
  Image out;
  int bad_depth = 0;
  switch (png_decode_raw(st, out, bad_depth)) {
    case PngStatus::ok: return out;
    case PngStatus::unsupported_depth:
      throw UnsupportedFormatError("PNG bit depth " + std::to_string(bad_depth) + " is not supported (8-bit only)");
    case PngStatus::unsupported_other: throw std::runtime_error("libpng initialization failed");
    case PngStatus::corrupt: break;
  }
  throw FormatError(std::string("corrupt PNG: ") + st.message, st.offset);
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  require_valid(image, "encode_png");
  std::vector<std::uint8_t> out;
  PngReadState st;
  if (!png_encode_raw(image, out, st)) throw std::runtime_error(std::string("PNG encoding failed: ") + st.message);
  return out;
}

Image decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw FormatError("not a binary PGM/PPM file (expected P5 or P6)", 0);
  PnmReader r(bytes);
  r.pos_ = 2;
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  const std::size_t w = r.number("width"), h = r.number("height");
  const std::size_t maxval_at = r.pos_;
  const std::size_t maxval = r.number("maxval");
  if (w == 0 || h == 0) throw FormatError("PNM with zero extent", maxval_at);
  if (maxval != 255) throw UnsupportedFormatError("PNM maxval " + std::to_string(maxval) + " is not supported (255 only)");
  if (r.pos_ >= bytes.size() || !std::isspace(bytes[r.pos_])) throw FormatError("PNM: missing separator", r.pos_);
  ++r.pos_;
  Image img(w, h, channels);
  const std::size_t need = img.pixels.size();
  if (bytes.size() - r.pos_ < need) throw FormatError("truncated PNM pixel data", bytes.size());
  std::memcpy(img.pixels.data(), bytes.data() + r.pos_, need);
  return img;
}

std::vector<std::uint8_t> encode_pnm(const Image& image) {
  require_valid(image, "encode_pnm");
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(image.width) +
                             " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open image " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    if (bytes.size() >= 2 && bytes[0] == 'P') return decode_pnm(bytes);
    return decode_png(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

void save_image(const Image& image, const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  std::vector<std::uint8_t> bytes;
  if (ext == ".png") {
    bytes = encode_png(image);
  } else if (ext == ".pgm" || ext == ".ppm") {
    bytes = encode_pnm(image);
  } else {
    throw UnsupportedFormatError("unknown image extension '" + ext + "' (use .png, .pgm or .ppm)");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

Image to_gray(const Image& rgb) {
  require_valid(rgb, "to_gray");
  if (rgb.channels == 1) return rgb;
  Image g(rgb.width, rgb.height, 1);
  for (std::size_t i = 0; i < rgb.width * rgb.height; ++i) {
    const double v = 0.299 * rgb.pixels[3 * i] + 0.587 * rgb.pixels[3 * i + 1] + 0.114 * rgb.pixels[3 * i + 2];
    g.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return g;
}

Image to_rgb(const Image& image) {
  require_valid(image, "to_rgb");
  if (image.channels == 3) return image;
  Image out(image.width, image.height, 3);
  for (std::size_t i = 0; i < image.pixels.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) out.pixels[3 * i + c] = image.pixels[i];
  return out;
}

Image square_resize(const Image& image, std::size_t size) {
  require_valid(image, "square_resize");
  if (size == 0) throw ShapeError("square_resize: size must be positive");
  const std::size_t side = std::min(image.width, image.height);
  const std::size_t x0 = (image.width - side) / 2, y0 = (image.height - side) / 2;
  if (side == size) {
    Image out(size, size, image.channels);
    for (std::size_t y = 0; y < size; ++y)
      std::memcpy(&out.at(y, 0), image.pixels.data() + ((y0 + y) * image.width + x0) * image.channels,
                  size * image.channels);
    return out;
  }
  Image out(size, size, image.channels);
  const double ratio = static_cast<double>(side) / static_cast<double>(size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double sy = std::clamp((y + 0.5) * ratio - 0.5, 0.0, side - 1.0);
      const double sx = std::clamp((x + 0.5) * ratio - 0.5, 0.0, side - 1.0);
      const std::size_t iy = static_cast<std::size_t>(sy), ix = static_cast<std::size_t>(sx);
      const std::size_t jy = std::min(iy + 1, side - 1), jx = std::min(ix + 1, side - 1);
      const double fy = sy - iy, fx = sx - ix;
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double v = (1 - fy) * ((1 - fx) * image.at(y0 + iy, x0 + ix, c) + fx * image.at(y0 + iy, x0 + jx, c)) +
                         fy * ((1 - fx) * image.at(y0 + jy, x0 + ix, c) + fx * image.at(y0 + jy, x0 + jx, c));
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  return out;
}

Tensor image_to_tensor(const Image& image, double lo, double hi) {
  require_valid(image, "image_to_tensor");
  const std::size_t px = image.width * image.height;
  std::vector<double> v(px * image.channels);
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t i = 0; i < px; ++i) v[c * px + i] = lo + (hi - lo) * image.pixels[i * image.channels + c] / 255.0;
  return Tensor(Shape{1, image.channels, image.height, image.width}, std::move(v));
}

Image tensor_to_image(const Tensor& t, double lo, double hi) {
  const bool batched = t.ndim() == 4;
  if (!(batched && t.dim(0) == 1) && t.ndim() != 3)
    throw ShapeError("tensor_to_image expects [1,C,H,W] or [C,H,W], got " + shape_str(t.shape()));
  const std::size_t c = t.dim(batched ? 1 : 0), h = t.dim(batched ? 2 : 1), w = t.dim(batched ? 3 : 2);
  Image img(w, h, c);
  const std::size_t px = w * h;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < px; ++i) {
      const double v = (t[ch * px + i] - lo) / (hi - lo) * 255.0;
      img.pixels[i * c + ch] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  return img;
}

Tensor binary_from_image(const Image& image) {
  require_valid(image, "binary_from_image");
  const Image g = to_gray(image);
  std::vector<double> v(g.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = g.pixels[i] > 127 ? 1.0 : 0.0;
  return Tensor(Shape{1, 1, g.height, g.width}, std::move(v));
}

Image binary_to_image(const Tensor& mask) {
  if (mask.ndim() != 4 || mask.dim(0) != 1 || mask.dim(1) != 1)
    throw ShapeError("binary_to_image expects [1,1,H,W], got " + shape_str(mask.shape()));
  Image img(mask.dim(3), mask.dim(2), 1);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = mask[i] > 0.5 ? 255 : 0;
  return img;
}

}  // namespace inpaint

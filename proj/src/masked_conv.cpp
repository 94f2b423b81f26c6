#include "inpaint/masked_conv.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "inpaint/error.hpp"

namespace inpaint {

namespace {

// Counts of valid and in-image taps per output pixel, [N*outH*outW] each.
struct WindowCounts {
  Tensor valid;
  Tensor inside;
};

WindowCounts conv_counts(const Tensor& mask, std::size_t kh, std::size_t kw, ConvOptions opt) {
  NoGradScope no_grad;
  const Tensor ones_kernel = Tensor::ones({1, 1, kh, kw});
  return {conv2d(mask, ones_kernel, Tensor(), opt),
          conv2d(Tensor::ones(mask.shape()), ones_kernel, Tensor(), opt)};
}

WindowCounts transpose_counts(const Tensor& mask, std::size_t kh, std::size_t kw, ConvOptions opt) {
  NoGradScope no_grad;
  const Tensor ones_kernel = Tensor::ones({1, 1, kh, kw});
  return {conv2d_transpose(mask, ones_kernel, Tensor(), opt),
          conv2d_transpose(Tensor::ones(mask.shape()), ones_kernel, Tensor(), opt)};
}

// Taps of a transposed conv landing on output `o` when the input is unbounded.
std::size_t aligned_taps(std::size_t o, std::size_t k, ConvOptions opt) {
  std::size_t n = 0;
  for (std::size_t t = 0; t < k; ++t) {
    const long pos = static_cast<long>(o + opt.padding) - static_cast<long>(t * opt.dilation);
    const long s = static_cast<long>(opt.stride);
    if (((pos % s) + s) % s == 0) ++n;
  }
  return n;
}

Tensor binarize(const Tensor& counts) {
  std::vector<double> m(counts.numel());
  const auto c = counts.data();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = c[i] > 0.5 ? 1.0 : 0.0;
  return Tensor(counts.shape(), std::move(m));
}

// out[n,f,p] = scale[n,p] * y[n,f,p] + b[f] where scale > 0, else 0.
Tensor rescale_windows(const Tensor& y, const std::vector<double>& scale, const Tensor& bias) {
  const std::size_t n_batch = y.dim(0), f_out = y.dim(1), pixels = y.dim(2) * y.dim(3);
  const auto yv = y.data();
  std::vector<double> out(y.numel(), 0.0);
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t f = 0; f < f_out; ++f) {
      const double b = bias.defined() ? bias[f] : 0.0;
      const std::size_t base = (n * f_out + f) * pixels;
      for (std::size_t p = 0; p < pixels; ++p) {
        const double s = scale[n * pixels + p];
        if (s > 0.0) out[base + p] = s * yv[base + p] + b;
      }
    }
  Tensor result(y.shape(), std::move(out));
  if (any_requires_grad({&y, &bias})) {
    result.set_requires_grad(true);
    active_tape().record(result, {y, bias}, [y, bias, scale, n_batch, f_out, pixels](std::span<const double> g) {
      auto gy = grad_sink(y);
      std::span<double> gb;
      if (bias.defined()) gb = grad_sink(bias);
      for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t f = 0; f < f_out; ++f) {
          const std::size_t base = (n * f_out + f) * pixels;
          for (std::size_t p = 0; p < pixels; ++p) {
            const double s = scale[n * pixels + p];
            if (s <= 0.0) continue;
            if (!gy.empty()) gy[base + p] += s * g[base + p];
            if (!gb.empty()) gb[f] += g[base + p];
          }
        }
    });
  }
  return result;
}

std::vector<double> window_scales(const WindowCounts& counts, SConvNorm norm,
                                  const std::vector<double>& geometric) {
  const auto valid = counts.valid.data(), inside = counts.inside.data();
  const std::size_t pixels = geometric.size();
  std::vector<double> scale(valid.size(), 0.0);
  for (std::size_t i = 0; i < scale.size(); ++i) {
    if (valid[i] < 0.5) continue;
    switch (norm) {
      case SConvNorm::window_mean: scale[i] = inside[i] / valid[i]; break;
      case SConvNorm::geometric_mean: scale[i] = geometric[i % pixels] / valid[i]; break;
      case SConvNorm::sum: scale[i] = 1.0 / valid[i]; break;
    }
  }
  return scale;
}

void require_kernel(const Tensor& kernel, const char* where) {
  if (kernel.ndim() != 4)
    throw ShapeError(std::string(where) + ": kernel must be 4-D, got " + shape_str(kernel.shape()));
}

}  // namespace

void require_binary_mask(const Tensor& mask, const char* where) {
  if (!mask.defined() || mask.ndim() != 4 || mask.dim(1) != 1)
    throw ShapeError(std::string(where) + ": mask must be [N,1,H,W], got " +
                     (mask.defined() ? shape_str(mask.shape()) : std::string("undefined")));
  for (double v : mask.data())
    if (v != 0.0 && v != 1.0)
      throw ShapeError(std::string(where) + ": mask is not binary (found " + std::to_string(v) + ")");
}

void require_masked_feature(const MaskedFeature& x, const char* where) {
  require_binary_mask(x.mask, where);
  const Shape& f = x.feature.shape();
  const Shape& m = x.mask.shape();
  if (f.size() != 4 || f[0] != m[0] || f[2] != m[2] || f[3] != m[3])
    throw ShapeError(std::string(where) + ": feature " + shape_str(f) + " and mask " + shape_str(m) +
                     " disagree on N, H or W");
}

Tensor mask_update(const Tensor& mask, std::size_t kh, std::size_t kw, ConvOptions opt) {
  require_binary_mask(mask, "mask_update");
  return binarize(conv_counts(mask, kh, kw, opt).valid);
}

Tensor mask_update_transpose(const Tensor& mask, std::size_t kh, std::size_t kw, ConvOptions opt) {
  require_binary_mask(mask, "mask_update_transpose");
  return binarize(transpose_counts(mask, kh, kw, opt).valid);
}

Tensor apply_mask(const Tensor& feature, const Tensor& mask) {
  Tensor wide;
  {
    NoGradScope no_grad;
    wide = feature.dim(1) == 1 ? mask : repeat_channels(mask, feature.dim(1));
  }
  return mul(feature, wide);
}

MaskedFeature sconv(const MaskedFeature& x, const Tensor& kernel, const Tensor& bias, ConvOptions opt,
                    SConvNorm norm) {
  require_masked_feature(x, "sconv");
  require_kernel(kernel, "sconv");
  const std::size_t kh = kernel.dim(2), kw = kernel.dim(3);
  const WindowCounts counts = conv_counts(x.mask, kh, kw, opt);
  const std::size_t pixels = counts.valid.dim(2) * counts.valid.dim(3);
  const std::vector<double> geometric(pixels, static_cast<double>(kh * kw));
  const Tensor y = conv2d(apply_mask(x.feature, x.mask), kernel, Tensor(), opt);
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != kernel.dim(0)))
    throw ShapeError("sconv: bias must be [" + std::to_string(kernel.dim(0)) + "], got " +
                     shape_str(bias.shape()));
  return {rescale_windows(y, window_scales(counts, norm, geometric), bias), binarize(counts.valid)};
}

MaskedFeature sconv_transpose(const MaskedFeature& x, const Tensor& kernel, const Tensor& bias,
                              ConvOptions opt, SConvNorm norm) {
  require_masked_feature(x, "sconv_transpose");
  require_kernel(kernel, "sconv_transpose");
  const std::size_t kh = kernel.dim(2), kw = kernel.dim(3);
  const WindowCounts counts = transpose_counts(x.mask, kh, kw, opt);
  const std::size_t oh = counts.valid.dim(2), ow = counts.valid.dim(3);
  std::vector<double> geometric(oh * ow);
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c)
      geometric[r * ow + c] = static_cast<double>(aligned_taps(r, kh, opt) * aligned_taps(c, kw, opt));
  const Tensor y = conv2d_transpose(apply_mask(x.feature, x.mask), kernel, Tensor(), opt);
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != kernel.dim(1)))
    throw ShapeError("sconv_transpose: bias must be [" + std::to_string(kernel.dim(1)) + "], got " +
                     shape_str(bias.shape()));
  return {rescale_windows(y, window_scales(counts, norm, geometric), bias), binarize(counts.valid)};
}

MaskedFeature skip_concat(const MaskedFeature& decoder, const MaskedFeature& encoder) {
  require_masked_feature(decoder, "skip_concat");
  require_masked_feature(encoder, "skip_concat");
  if (decoder.feature.dim(0) != encoder.feature.dim(0) || decoder.feature.dim(2) != encoder.feature.dim(2) ||
      decoder.feature.dim(3) != encoder.feature.dim(3))
    throw ShapeError("skip_concat: decoder " + shape_str(decoder.feature.shape()) + " and encoder " +
                     shape_str(encoder.feature.shape()) + " differ in batch or spatial extent");
  std::vector<double> m(decoder.mask.numel());
  const auto a = decoder.mask.data(), b = encoder.mask.data();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::max(a[i], b[i]);
  return {concat({decoder.feature, encoder.feature}, 1), Tensor(decoder.mask.shape(), std::move(m))};
}

}  // namespace inpaint

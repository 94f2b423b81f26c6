#include "inpaint/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "inpaint/conv_kernels.hpp"
#include "inpaint/error.hpp"

namespace inpaint {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  Tensor y(x.shape(), std::move(out));
  if (any_requires_grad({&x})) {
    y.set_requires_grad(true);
    active_tape().record(y, {x}, [x, y, deriv](std::span<const double> g) {
      auto gx = grad_sink(x);
      const auto xv = x.data();
      const auto yv = y.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
    });
  }
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Tensor y(a.shape(), std::move(out));
  if (any_requires_grad({&a, &b})) {
    y.set_requires_grad(true);
    active_tape().record(y, {a, b}, [a, b](std::span<const double> g) {
      for (const Tensor* t : {&a, &b}) {
        auto gt = grad_sink(*t);
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  Tensor y(a.shape(), std::move(out));
  if (any_requires_grad({&a, &b})) {
    y.set_requires_grad(true);
    active_tape().record(y, {a, b}, [a, b](std::span<const double> g) {
      auto ga = grad_sink(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
      auto gb = grad_sink(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Tensor y(a.shape(), std::move(out));
  if (any_requires_grad({&a, &b})) {
    y.set_requires_grad(true);
    active_tape().record(y, {a, b}, [a, b](std::span<const double> g) {
      const auto av = a.data(), bv = b.data();
      auto ga = grad_sink(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
      auto gb = grad_sink(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    });
  }
  return y;
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data())
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v))); },
      [](double v, double) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor y = Tensor::scalar(acc);
  if (any_requires_grad({&x})) {
    y.set_requires_grad(true);
    active_tape().record(y, {x}, [x](std::span<const double> g) {
      auto gx = grad_sink(x);
      for (auto& v : gx) v += g[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor y = Tensor::scalar(acc / n);
  if (any_requires_grad({&x})) {
    y.set_requires_grad(true);
    active_tape().record(y, {x}, [x, n](std::span<const double> g) {
      auto gx = grad_sink(x);
      for (auto& v : gx) v += g[0] / n;
    });
  }
  return y;
}

namespace {

// Splits a shape around `axis` into (outer, axis extent, inner).
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok)
      throw ShapeError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
    out_shape[axis] += s[axis];
  }
  const AxisSplit os = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const AxisSplit ps = split_axis(p.shape(), axis);
    const auto src = p.data();
    const std::size_t block = ps.extent * ps.inner;
    for (std::size_t o = 0; o < os.outer; ++o)
      std::copy_n(src.begin() + o * block, block,
                  out.begin() + o * os.extent * os.inner + offset * os.inner);
    offset += ps.extent;
  }
  Tensor y(out_shape, std::move(out));
  bool needs = false;
  for (const auto& p : parts) needs = needs || any_requires_grad({&p});
  if (needs) {
    y.set_requires_grad(true);
    active_tape().record(y, parts, [parts, axis, os](std::span<const double> g) {
      std::size_t offset = 0;
      for (const auto& p : parts) {
        const AxisSplit ps = split_axis(p.shape(), axis);
        auto gp = grad_sink(p);
        if (!gp.empty()) {
          const std::size_t block = ps.extent * ps.inner;
          for (std::size_t o = 0; o < os.outer; ++o) {
            const double* src = g.data() + o * os.extent * os.inner + offset * os.inner;
            double* dst = gp.data() + o * block;
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
        offset += ps.extent;
      }
    });
  }
  return y;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw ShapeError("slice axis out of range for " + shape_str(s));
  if (begin >= end || end > s[axis])
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for extent " + std::to_string(s[axis]));
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const AxisSplit xs = split_axis(s, axis);
  const std::size_t block = (end - begin) * xs.inner;
  std::vector<double> out(shape_numel(out_shape));
  const auto src = x.data();
  for (std::size_t o = 0; o < xs.outer; ++o)
    std::copy_n(src.begin() + o * xs.extent * xs.inner + begin * xs.inner, block,
                out.begin() + o * block);
  Tensor y(out_shape, std::move(out));
  if (any_requires_grad({&x})) {
    y.set_requires_grad(true);
    active_tape().record(y, {x}, [x, xs, begin, block](std::span<const double> g) {
      auto gx = grad_sink(x);
      for (std::size_t o = 0; o < xs.outer; ++o) {
        double* dst = gx.data() + o * xs.extent * xs.inner + begin * xs.inner;
        const double* src = g.data() + o * block;
        for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Tensor y(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (any_requires_grad({&x})) {
    y.set_requires_grad(true);
    active_tape().record(y, {x}, [x](std::span<const double> g) {
      auto gx = grad_sink(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
  }
  return y;
}

Tensor repeat_channels(const Tensor& x, std::size_t c) {
  if (x.ndim() != 4 || x.dim(1) != 1)
    throw ShapeError("repeat_channels expects [N,1,H,W], got " + shape_str(x.shape()));
  if (c == 1) return x;
  return concat(std::vector<Tensor>(c, x), 1);
}

Tensor transpose2d(const Tensor& x) {
  if (x.ndim() != 2) throw ShapeError("transpose2d expects a matrix, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto src = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = src[i * c + j];
  Tensor y(Shape{c, r}, std::move(out));
  if (any_requires_grad({&x})) {
    y.set_requires_grad(true);
    active_tape().record(y, {x}, [x, r, c](std::span<const double> g) {
      auto gx = grad_sink(x);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
    });
  }
  return y;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::gemm(false, false, m, n, k, 1.0, a.data().data(), k, b.data().data(), n, 0.0,
                out.data(), n);
  Tensor y(Shape{m, n}, std::move(out));
  if (any_requires_grad({&a, &b})) {
    y.set_requires_grad(true);
    active_tape().record(y, {a, b}, [a, b, m, n, k](std::span<const double> g) {
      if (auto ga = grad_sink(a); !ga.empty())
        kernels::gemm(false, true, m, k, n, 1.0, g.data(), n, b.data().data(), n, 1.0,
                      ga.data(), k);
      if (auto gb = grad_sink(b); !gb.empty())
        kernels::gemm(true, false, k, n, m, 1.0, a.data().data(), k, g.data(), n, 1.0,
                      gb.data(), n);
    });
  }
  return y;
}

// ---------------------------------------------------------------------------

namespace {

void add_bias(std::vector<double>& out, const Tensor& bias, std::size_t batch,
              std::size_t channels, std::size_t pixels) {
  if (!bias.defined()) return;
  const auto b = bias.data();
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t f = 0; f < channels; ++f) {
      double* dst = out.data() + (n * channels + f) * pixels;
      for (std::size_t p = 0; p < pixels; ++p) dst[p] += b[f];
    }
}

void bias_grad(const Tensor& bias, std::span<const double> g, std::size_t batch,
               std::size_t channels, std::size_t pixels) {
  if (!bias.defined()) return;
  auto gb = grad_sink(bias);
  if (gb.empty()) return;
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t f = 0; f < channels; ++f) {
      const double* src = g.data() + (n * channels + f) * pixels;
      double acc = 0.0;
      for (std::size_t p = 0; p < pixels; ++p) acc += src[p];
      gb[f] += acc;
    }
}

void check_bias(const Tensor& bias, std::size_t channels, const char* op) {
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != channels))
    throw ShapeError(std::string(op) + ": bias shape " + shape_str(bias.shape()) +
                     " does not match " + std::to_string(channels) + " output channels");
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, ConvOptions opt) {
  if (input.ndim() != 4 || kernel.ndim() != 4)
    throw ShapeError("conv2d expects 4-D input and kernel, got " + shape_str(input.shape()) +
                     " and " + shape_str(kernel.shape()));
  if (input.dim(1) != kernel.dim(1))
    throw ShapeError("conv2d: input has " + std::to_string(input.dim(1)) +
                     " channels but kernel expects " + std::to_string(kernel.dim(1)) +
                     " (input " + shape_str(input.shape()) + ", kernel " +
                     shape_str(kernel.shape()) + ")");
  check_bias(bias, kernel.dim(0), "conv2d");
  const auto g = kernels::make_conv_geometry(input.dim(0), input.dim(1), input.dim(2),
                                             input.dim(3), kernel.dim(0), kernel.dim(2),
                                             kernel.dim(3), opt.stride, opt.padding, opt.dilation);
  std::vector<double> out(g.batch * g.out_channels * g.out_pixels());
  kernels::conv2d_forward(g, input.data().data(), kernel.data().data(), out.data());
  add_bias(out, bias, g.batch, g.out_channels, g.out_pixels());
  Tensor y(Shape{g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out));
  if (any_requires_grad({&input, &kernel, &bias})) {
    y.set_requires_grad(true);
    active_tape().record(y, {input, kernel, bias}, [input, kernel, bias, g](std::span<const double> go) {
      if (auto gx = grad_sink(input); !gx.empty())
        kernels::conv2d_backward_input(g, go.data(), kernel.data().data(), gx.data());
      if (auto gw = grad_sink(kernel); !gw.empty())
        kernels::conv2d_backward_weight(g, input.data().data(), go.data(), gw.data());
      bias_grad(bias, go, g.batch, g.out_channels, g.out_pixels());
    });
  }
  return y;
}

std::size_t conv_transpose_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                  std::size_t padding, std::size_t dilation) {
  const std::size_t full = (in - 1) * stride + dilation * (kernel - 1) + 1;
  if (full <= 2 * padding) throw ShapeError("transposed convolution output would be empty");
  return full - 2 * padding;
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        ConvOptions opt) {
  if (input.ndim() != 4 || kernel.ndim() != 4)
    throw ShapeError("conv2d_transpose expects 4-D input and kernel, got " +
                     shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  if (input.dim(1) != kernel.dim(0))
    throw ShapeError("conv2d_transpose: input has " + std::to_string(input.dim(1)) +
                     " channels but kernel expects " + std::to_string(kernel.dim(0)) +
                     " (kernel " + shape_str(kernel.shape()) + ")");
  const std::size_t out_c = kernel.dim(1);
  check_bias(bias, out_c, "conv2d_transpose");
  const std::size_t oh =
      conv_transpose_extent(input.dim(2), kernel.dim(2), opt.stride, opt.padding, opt.dilation);
  const std::size_t ow =
      conv_transpose_extent(input.dim(3), kernel.dim(3), opt.stride, opt.padding, opt.dilation);
  // The forward conv that maps our output back onto our input.
  const auto g = kernels::make_conv_geometry(input.dim(0), out_c, oh, ow, input.dim(1),
                                             kernel.dim(2), kernel.dim(3), opt.stride,
                                             opt.padding, opt.dilation);
  if (g.out_h != input.dim(2) || g.out_w != input.dim(3))
    throw ShapeError("conv2d_transpose: inconsistent geometry");
  std::vector<double> out(g.batch * out_c * oh * ow, 0.0);
  kernels::conv2d_backward_input(g, input.data().data(), kernel.data().data(), out.data());
  add_bias(out, bias, g.batch, out_c, oh * ow);
  Tensor y(Shape{g.batch, out_c, oh, ow}, std::move(out));
  if (any_requires_grad({&input, &kernel, &bias})) {
    y.set_requires_grad(true);
    active_tape().record(y, {input, kernel, bias}, [input, kernel, bias, g](std::span<const double> go) {
      if (auto gx = grad_sink(input); !gx.empty()) {
        std::vector<double> tmp(gx.size());
        kernels::conv2d_forward(g, go.data(), kernel.data().data(), tmp.data());
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += tmp[i];
      }
      if (auto gw = grad_sink(kernel); !gw.empty())
        kernels::conv2d_backward_weight(g, go.data(), input.data().data(), gw.data());
      bias_grad(bias, go, g.batch, g.in_channels, g.in_pixels());
    });
  }
  return y;
}

Tensor avg_pool2d(const Tensor& x, std::size_t k) {
  if (x.ndim() != 4 || k == 0 || x.dim(2) < k || x.dim(3) < k)
    throw ShapeError("avg_pool2d: window " + std::to_string(k) + " on " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / k, ow = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  const auto src = x.data();
  std::vector<double> out(n * c * oh * ow, 0.0);
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < k; ++b) acc += src[(p * h + i * k + a) * w + j * k + b];
        out[(p * oh + i) * ow + j] = acc * inv;
      }
  Tensor y(Shape{n, c, oh, ow}, std::move(out));
  if (any_requires_grad({&x})) {
    y.set_requires_grad(true);
    active_tape().record(y, {x}, [x, n, c, h, w, oh, ow, k, inv](std::span<const double> g) {
      auto gx = grad_sink(x);
      for (std::size_t p = 0; p < n * c; ++p)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j) {
            const double v = g[(p * oh + i) * ow + j] * inv;
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t b = 0; b < k; ++b) gx[(p * h + i * k + a) * w + j * k + b] += v;
          }
    });
  }
  return y;
}

Tensor spatial_mean(const Tensor& x) {
  if (x.ndim() != 4) throw ShapeError("spatial_mean expects [N,C,H,W], got " + shape_str(x.shape()));
  const std::size_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  const auto src = x.data();
  std::vector<double> out(nc);
  for (std::size_t p = 0; p < nc; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += src[p * hw + i];
    out[p] = acc / static_cast<double>(hw);
  }
  Tensor y(Shape{x.dim(0), x.dim(1)}, std::move(out));
  if (any_requires_grad({&x})) {
    y.set_requires_grad(true);
    active_tape().record(y, {x}, [x, nc, hw](std::span<const double> g) {
      auto gx = grad_sink(x);
      for (std::size_t p = 0; p < nc; ++p)
        for (std::size_t i = 0; i < hw; ++i) gx[p * hw + i] += g[p] / static_cast<double>(hw);
    });
  }
  return y;
}

}  // namespace inpaint

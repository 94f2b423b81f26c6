#pragma once

// Differentiable tensor operations. Binary elementwise ops accept identical
// shapes only; scalar operands go through the *_scalar overloads.

#include <cstddef>
#include <vector>

#include "inpaint/tensor.hpp"

namespace inpaint {

struct ConvOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
};

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor scale(const Tensor& a, double s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
/// Throws DomainError on any non-positive entry.
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
/// Subgradient 0 at x == 0.
Tensor abs(const Tensor& x);
/// log(1 + e^x), evaluated without overflow.
Tensor softplus(const Tensor& x);
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
/// [N,1,H,W] -> [N,c,H,W]
Tensor repeat_channels(const Tensor& x, std::size_t c);

Tensor transpose2d(const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b);

/// input [N,C,H,W], kernel [F,C,kH,kW], bias [F] (may be undefined).
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, ConvOptions opt);
/// input [N,C,H,W], kernel [C,F,kH,kW]; output extent (H-1)*stride - 2*padding + dilation*(kH-1) + 1.
Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        ConvOptions opt);

/// Non-overlapping average pooling with window and stride `k`.
Tensor avg_pool2d(const Tensor& x, std::size_t k);
/// Mean over H and W: [N,C,H,W] -> [N,C].
Tensor spatial_mean(const Tensor& x);

std::size_t conv_transpose_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                  std::size_t padding, std::size_t dilation);

}  // namespace inpaint

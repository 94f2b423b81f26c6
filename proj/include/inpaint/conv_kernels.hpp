#pragma once

// Raw im2col/GEMM convolution kernels shared by the differentiable conv ops
// and the masked convolution. Buffers are NCHW, row-major, and the backward
// kernels accumulate into their destination.

#include <cstddef>

namespace inpaint::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1, in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride = 1, padding = 0, dilation = 1;
  std::size_t out_h = 1, out_w = 1;

  std::size_t patch_size() const { return in_channels * kernel_h * kernel_w; }
  std::size_t out_pixels() const { return out_h * out_w; }
  std::size_t in_pixels() const { return in_h * in_w; }
};

/// Fills out_h/out_w for a forward convolution; throws ShapeError if the
/// effective kernel does not fit the padded input.
ConvGeometry make_conv_geometry(std::size_t batch, std::size_t in_channels, std::size_t in_h,
                                std::size_t in_w, std::size_t out_channels, std::size_t kernel_h,
                                std::size_t kernel_w, std::size_t stride, std::size_t padding,
                                std::size_t dilation);

/// out[N,F,Ho,Wo] = conv(x, w); no bias. Overwrites out.
void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, double* out);
/// gx += conv2d^T(gout, w)
void conv2d_backward_input(const ConvGeometry& g, const double* gout, const double* w, double* gx);
/// gw += sum_n gout_n * im2col(x_n)^T
void conv2d_backward_weight(const ConvGeometry& g, const double* x, const double* gout, double* gw);

/// C = alpha * op(A) * op(B) + beta * C, row-major. Runs in float when the
/// global compute precision is f32.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc);

}  // namespace inpaint::kernels

#include "inpaint/conv_kernels.hpp"

#include <cblas.h>

#include <vector>

#include "inpaint/error.hpp"
#include "inpaint/tensor.hpp"

namespace inpaint::kernels {

ConvGeometry make_conv_geometry(std::size_t batch, std::size_t in_channels, std::size_t in_h,
                                std::size_t in_w, std::size_t out_channels, std::size_t kernel_h,
                                std::size_t kernel_w, std::size_t stride, std::size_t padding,
                                std::size_t dilation) {
  if (kernel_h == 0 || kernel_w == 0 || stride == 0 || dilation == 0)
    throw ShapeError("kernel extents, stride and dilation must be >= 1");
  const std::size_t eff_h = dilation * (kernel_h - 1) + 1;
  const std::size_t eff_w = dilation * (kernel_w - 1) + 1;
  if (in_h + 2 * padding < eff_h || in_w + 2 * padding < eff_w)
    throw ShapeError("effective kernel " + std::to_string(eff_h) + "x" + std::to_string(eff_w) +
                     " larger than padded input " + std::to_string(in_h + 2 * padding) + "x" +
                     std::to_string(in_w + 2 * padding));
  ConvGeometry g;
  g.batch = batch;
  g.in_channels = in_channels;
  g.in_h = in_h;
  g.in_w = in_w;
  g.out_channels = out_channels;
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride = stride;
  g.padding = padding;
  g.dilation = dilation;
  g.out_h = (in_h + 2 * padding - eff_h) / stride + 1;
  g.out_w = (in_w + 2 * padding - eff_w) / stride + 1;
  return g;
}

namespace {

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.padding == 0;
}

// col[(c*kh + i)*kw + j][oh*Wo + ow] = x[c][oh*s - p + i*d][ow*s - p + j*d]
void im2col(const ConvGeometry& g, const double* x, double* col) {
  const std::size_t opix = g.out_pixels();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const double* xc = x + c * g.in_pixels();
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        double* row = col + ((c * g.kernel_h + i) * g.kernel_w + j) * opix;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + i * g.dilation) -
                          static_cast<long>(g.padding);
          double* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long>(g.in_h)) {
            for (std::size_t ow = 0; ow < g.out_w; ++ow) dst[ow] = 0.0;
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(ih) * g.in_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + j * g.dilation) -
                            static_cast<long>(g.padding);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.in_w)) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* x) {
  const std::size_t opix = g.out_pixels();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    double* xc = x + c * g.in_pixels();
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        const double* row = col + ((c * g.kernel_h + i) * g.kernel_w + j) * opix;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + i * g.dilation) -
                          static_cast<long>(g.padding);
          if (ih < 0 || ih >= static_cast<long>(g.in_h)) continue;
          double* dst = xc + static_cast<std::size_t>(ih) * g.in_w;
          const double* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + j * g.dilation) -
                            static_cast<long>(g.padding);
            if (iw >= 0 && iw < static_cast<long>(g.in_w)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc) {
  const auto ta = trans_a ? CblasTrans : CblasNoTrans;
  const auto tb = trans_b ? CblasTrans : CblasNoTrans;
  if (compute_precision() == Precision::f64) {
    cblas_dgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
                beta, c, static_cast<int>(ldc));
    return;
  }
  const std::size_t a_rows = trans_a ? k : m;
  const std::size_t b_rows = trans_b ? n : k;
  std::vector<float> af(a_rows * lda), bf(b_rows * ldb), cf(m * ldc);
  for (std::size_t i = 0; i < af.size(); ++i) af[i] = static_cast<float>(a[i]);
  for (std::size_t i = 0; i < bf.size(); ++i) bf[i] = static_cast<float>(b[i]);
  cblas_sgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), static_cast<float>(alpha), af.data(), static_cast<int>(lda),
              bf.data(), static_cast<int>(ldb), 0.0f, cf.data(), static_cast<int>(ldc));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double& dst = c[i * ldc + j];
      dst = (beta == 0.0 ? 0.0 : beta * dst) + static_cast<double>(cf[i * ldc + j]);
    }
}

void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, double* out) {
  const std::size_t k = g.patch_size();
  const std::size_t opix = g.out_pixels();
  std::vector<double> col(is_pointwise(g) ? 0 : k * opix);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* xn = x + n * g.in_channels * g.in_pixels();
    const double* src = xn;
    if (!col.empty()) {
      im2col(g, xn, col.data());
      src = col.data();
    }
    gemm(false, false, g.out_channels, opix, k, 1.0, w, k, src, opix, 0.0,
         out + n * g.out_channels * opix, opix);
  }
}

void conv2d_backward_input(const ConvGeometry& g, const double* gout, const double* w,
                           double* gx) {
  const std::size_t k = g.patch_size();
  const std::size_t opix = g.out_pixels();
  const bool pointwise = is_pointwise(g);
  std::vector<double> col(pointwise ? 0 : k * opix);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* gn = gout + n * g.out_channels * opix;
    double* gxn = gx + n * g.in_channels * g.in_pixels();
    if (pointwise) {
      gemm(true, false, k, opix, g.out_channels, 1.0, w, k, gn, opix, 1.0, gxn, opix);
      continue;
    }
    gemm(true, false, k, opix, g.out_channels, 1.0, w, k, gn, opix, 0.0, col.data(), opix);
    col2im_add(g, col.data(), gxn);
  }
}

void conv2d_backward_weight(const ConvGeometry& g, const double* x, const double* gout,
                            double* gw) {
  const std::size_t k = g.patch_size();
  const std::size_t opix = g.out_pixels();
  std::vector<double> col(is_pointwise(g) ? 0 : k * opix);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* xn = x + n * g.in_channels * g.in_pixels();
    const double* src = xn;
    if (!col.empty()) {
      im2col(g, xn, col.data());
      src = col.data();
    }
    gemm(false, true, g.out_channels, k, opix, 1.0, gout + n * g.out_channels * opix, opix, src,
         opix, 1.0, gw, k);
  }
}

}  // namespace inpaint::kernels

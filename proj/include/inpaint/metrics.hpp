#pragma once

// Image quality metrics. Images are [N,C,H,W] tensors on a 0..255 scale.

#include <limits>
#include <vector>

#include "inpaint/tensor.hpp"

namespace inpaint {

/// 10 log10(max^2 / MSE); +infinity for identical inputs.
double psnr(const Tensor& a, const Tensor& b, double max_value = 255.0);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;
};

/// Mean SSIM over all fully contained windows, averaged over samples and
/// channels. Throws ShapeError when the image is smaller than the window.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt = {});

struct FidOptions {
  bool squared_mean_term = true;
  double regularization = 1e-6;
};

struct FidResult {
  double value = 0.0;
  bool regularized = false;  // a covariance was singular and got eps*I added
};

/// Frechet distance between Gaussian fits. Rows are samples.
FidResult fid(const std::vector<std::vector<double>>& real, const std::vector<std::vector<double>>& gen,
              const FidOptions& opt = {});

/// Rows of an [N, D] tensor.
std::vector<std::vector<double>> rows(const Tensor& t);

}  // namespace inpaint

#pragma once

// Canny edge detection producing binary ground-truth edge maps.

#include "inpaint/image.hpp"
#include "inpaint/tensor.hpp"

namespace inpaint {

struct CannyOptions {
  double sigma = 2.0;
  double low = 0.1;   // fraction of the largest gradient magnitude
  double high = 0.2;  // fraction of the largest gradient magnitude
};

/// Throws std::invalid_argument unless sigma > 0 and 0 < low < high.
void validate(const CannyOptions& opt);

/// gray [1,1,H,W]; any scale. Returns a binary [1,1,H,W] map.
Tensor canny(const Tensor& gray, const CannyOptions& opt = {});
/// Converts to luminance first (values / 255).
Tensor canny(const Image& image, const CannyOptions& opt = {});

}  // namespace inpaint

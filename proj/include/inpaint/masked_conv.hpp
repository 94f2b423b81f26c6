#pragma once

// Mask-aware convolution: each output is renormalized by the valid fraction
// of its window, fully invalid windows emit 0, and the validity mask is
// propagated by the "any valid pixel in the window" rule.

#include <cstddef>

#include "inpaint/ops.hpp"
#include "inpaint/tensor.hpp"

namespace inpaint {

/// Feature map plus validity mask (1 = valid pixel).
struct MaskedFeature {
  Tensor feature;  // [N,C,H,W]
  Tensor mask;     // [N,1,H,W], values in {0,1}
};

/// Denominator of the renormalization.
enum class SConvNorm {
  window_mean,     // scale = taps inside the image / valid taps
  geometric_mean,  // scale = kH*kW (or the tap count for transposed) / valid taps
  sum,             // scale = 1 / valid taps
};

/// Throws ShapeError unless `mask` is [N,1,H,W] with entries exactly 0 or 1.
void require_binary_mask(const Tensor& mask, const char* where);
void require_masked_feature(const MaskedFeature& x, const char* where);

/// Output pixel is 1 iff its receptive window holds at least one valid pixel.
Tensor mask_update(const Tensor& mask, std::size_t kh, std::size_t kw, ConvOptions opt);
/// Same rule for a transposed convolution: an output is 1 iff some valid
/// input scatters into it.
Tensor mask_update_transpose(const Tensor& mask, std::size_t kh, std::size_t kw, ConvOptions opt);

/// kernel [F,C,kH,kW]; bias [F] or undefined.
MaskedFeature sconv(const MaskedFeature& x, const Tensor& kernel, const Tensor& bias, ConvOptions opt,
                    SConvNorm norm = SConvNorm::window_mean);
/// kernel [C,F,kH,kW].
MaskedFeature sconv_transpose(const MaskedFeature& x, const Tensor& kernel, const Tensor& bias,
                              ConvOptions opt, SConvNorm norm = SConvNorm::window_mean);

/// Channel concat of the features; mask is the elementwise max (union).
MaskedFeature skip_concat(const MaskedFeature& decoder, const MaskedFeature& encoder);

/// feature * mask, broadcast over channels. Differentiable in the feature.
Tensor apply_mask(const Tensor& feature, const Tensor& mask);

}  // namespace inpaint

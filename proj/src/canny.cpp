#include "inpaint/canny.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "inpaint/error.hpp"

namespace inpaint {

namespace {

using Plane = std::vector<double>;

Plane blur(const Plane& src, long h, long w, double sigma) {
  const long r = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double total = 0.0;
  for (long i = -r; i <= r; ++i) total += k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  for (double& v : k) v /= total;
  auto clamp_to = [](long v, long n) { return std::clamp(v, 0L, n - 1); };
  Plane tmp(src.size()), out(src.size());
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long i = -r; i <= r; ++i) acc += k[i + r] * src[y * w + clamp_to(x + i, w)];
      tmp[y * w + x] = acc;
    }
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long i = -r; i <= r; ++i) acc += k[i + r] * tmp[clamp_to(y + i, h) * w + x];
      out[y * w + x] = acc;
    }
  return out;
}

}  // namespace

void validate(const CannyOptions& opt) {
  if (!(opt.sigma > 0.0)) throw std::invalid_argument("canny: sigma must be positive");
  if (!(opt.low > 0.0 && opt.low < opt.high))
    throw std::invalid_argument("canny: thresholds must satisfy 0 < low < high (got " + std::to_string(opt.low) +
                                ", " + std::to_string(opt.high) + ")");
}

Tensor canny(const Tensor& gray, const CannyOptions& opt) {
  validate(opt);
  if (gray.ndim() != 4 || gray.dim(0) != 1 || gray.dim(1) != 1)
    throw ShapeError("canny expects [1,1,H,W], got " + shape_str(gray.shape()));
  const long h = gray.dim(2), w = gray.dim(3);
  const Plane s = blur(Plane(gray.data().begin(), gray.data().end()), h, w, opt.sigma);
  auto at = [&](long y, long x) { return s[std::clamp(y, 0L, h - 1) * w + std::clamp(x, 0L, w - 1)]; };

  Plane mag(h * w, 0.0);
  std::vector<int> dir(h * w, 0);
  double peak = 0.0;
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
      const double m = std::hypot(gx, gy);
      mag[y * w + x] = m;
      peak = std::max(peak, m);
      // Quantize the gradient direction to 0, 45, 90, 135 degrees.
      double angle = std::atan2(gy, gx) * 180.0 / M_PI;
      if (angle < 0) angle += 180.0;
      dir[y * w + x] = angle < 22.5 || angle >= 157.5 ? 0 : angle < 67.5 ? 1 : angle < 112.5 ? 2 : 3;
    }
  std::vector<double> out(h * w, 0.0);
  if (peak <= 1e-12) return Tensor(gray.shape(), std::move(out));

  static constexpr long kStep[4][2] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}};  // (dy, dx) along the gradient
  Plane thin(h * w, 0.0);
  for (long y = 1; y + 1 < h; ++y)
    for (long x = 1; x + 1 < w; ++x) {
      const double m = mag[y * w + x];
      const auto [dy, dx] = kStep[dir[y * w + x]];
      const double before = mag[(y - dy) * w + (x - dx)], after = mag[(y + dy) * w + (x + dx)];
      // Ties go to the pixel further along the gradient, keeping plateaus one pixel wide.
      if (m >= before && m > after) thin[y * w + x] = m;
    }

  const double hi = opt.high * peak, lo = opt.low * peak;
  std::vector<long> stack;
  for (long i = 0; i < h * w; ++i)
    if (thin[i] >= hi && thin[i] > 0.0) {
      out[i] = 1.0;
      stack.push_back(i);
    }
  while (!stack.empty()) {
    const long i = stack.back();
    stack.pop_back();
    const long y = i / w, x = i % w;
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx) {
        const long ny = y + dy, nx = x + dx;
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const long j = ny * w + nx;
        if (out[j] == 0.0 && thin[j] >= lo && thin[j] > 0.0) {
          out[j] = 1.0;
          stack.push_back(j);
        }
      }
  }
  return Tensor(gray.shape(), std::move(out));
}

Tensor canny(const Image& image, const CannyOptions& opt) { return canny(image_to_tensor(to_gray(image), 0.0, 1.0), opt); }

}  // namespace inpaint

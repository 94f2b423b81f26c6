#include "inpaint/batch.hpp"

#include <numeric>

#include "inpaint/error.hpp"
#include "inpaint/image.hpp"
#include "inpaint/ops.hpp"

namespace inpaint {

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ShapeError("batch needs at least one sample");
  std::vector<Tensor> image, gray, edges, mask;
  for (std::size_t i : indices) {
    if (i >= samples.size()) throw ShapeError("batch index " + std::to_string(i) + " out of range");
    const Sample& s = samples[i];
    validate(s);
    image.push_back(image_to_tensor(to_rgb(s.image)));
    gray.push_back(image_to_tensor(to_gray(s.image), 0.0, 1.0));
    edges.push_back(s.edge_gt);
    mask.push_back(s.mask_paper);
  }
  NoGradScope no_grad;
  return {concat(image, 0), concat(gray, 0), concat(edges, 0), concat(mask, 0)};
}

std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch, std::int64_t step, std::uint64_t seed) {
  if (n == 0 || batch == 0) throw std::invalid_argument("batch schedule needs n > 0 and batch > 0");
  std::vector<std::size_t> out;
  out.reserve(batch);
  std::uint64_t flat = static_cast<std::uint64_t>(step) * batch;
  std::uint64_t cached_epoch = ~0ull;
  std::vector<std::size_t> order(n);
  for (std::size_t k = 0; k < batch; ++k, ++flat) {
    const std::uint64_t epoch = flat / n;
    if (epoch != cached_epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(seed ^ (0x9e3779b97f4a7c15ull * (epoch + 1)));
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next() % i]);
      cached_epoch = epoch;
    }
    out.push_back(order[flat % n]);
  }
  return out;
}

}  // namespace inpaint

#include "inpaint/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "inpaint/conv_kernels.hpp"
#include "inpaint/error.hpp"
#include "inpaint/ops.hpp"

namespace inpaint {

void validate(const LossWeights& w) {
  for (auto [name, v] : {std::pair{"lambda_l1", w.l1}, std::pair{"lambda_adv", w.adv},
                         std::pair{"lambda_p", w.perceptual}, std::pair{"lambda_s", w.style}})
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string(name) + " must be a finite non-negative number, got " +
                                  std::to_string(v));
}

FeatureExtractor::FeatureExtractor(std::vector<std::size_t> widths, std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("feature extractor needs at least one layer");
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(widths[i] * 9));
    kernels_.push_back(Tensor::randn({widths[i + 1], widths[i], 3, 3}, rng, stddev));
    biases_.push_back(Tensor::uniform({widths[i + 1]}, rng, -0.1, 0.1));
  }
}

FeatureExtractor FeatureExtractor::standard(std::uint64_t seed) { return FeatureExtractor({3, 16, 32, 32, 64}, seed); }

FeatureExtractor FeatureExtractor::identity() {
  FeatureExtractor fx;
  fx.identity_ = true;
  return fx;
}

std::vector<Tensor> FeatureExtractor::features(const Tensor& image) const {
  if (identity_) return {image};
  if (image.ndim() != 4 || image.dim(1) != kernels_.front().dim(1))
    throw ShapeError("feature extractor expects [N," + std::to_string(kernels_.front().dim(1)) +
                     ",H,W], got " + shape_str(image.shape()));
  std::vector<Tensor> out;
  Tensor x = image;
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    if (i > 0 && x.dim(2) >= 2 && x.dim(3) >= 2) x = avg_pool2d(x, 2);
    x = relu(conv2d(x, kernels_[i], biases_[i], {1, 1, 1}));
    out.push_back(x);
  }
  return out;
}

Tensor FeatureExtractor::pooled(const Tensor& image) const { return spatial_mean(features(image).back()); }

Tensor l1_loss(const Tensor& a, const Tensor& b) { return mean(abs(a - b)); }

Tensor discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits) {
  // -log sigmoid(z) = softplus(-z); -log(1 - sigmoid(z)) = softplus(z)
  return mean(softplus(scale(real_logits, -1.0))) + mean(softplus(fake_logits));
}

Tensor generator_adversarial_loss(const Tensor& fake_logits) { return mean(softplus(scale(fake_logits, -1.0))); }

AdversarialLosses adversarial_losses(const Tensor& real_logits, const Tensor& fake_logits) {
  return {discriminator_loss(real_logits, fake_logits), generator_adversarial_loss(fake_logits)};
}

Tensor perceptual_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& fx) {
  const auto fa = fx.features(a), fb = fx.features(b);
  Tensor total = l1_loss(fa[0], fb[0]);
  for (std::size_t i = 1; i < fa.size(); ++i) total = total + l1_loss(fa[i], fb[i]);
  return total;
}

Tensor gram_matrix(const Tensor& phi) {
  if (phi.ndim() != 4) throw ShapeError("gram_matrix expects [N,C,H,W], got " + shape_str(phi.shape()));
  const std::size_t n = phi.dim(0), c = phi.dim(1), p = phi.dim(2) * phi.dim(3);
  const double norm = 1.0 / static_cast<double>(c * p);
  std::vector<double> out(n * c * c);
  for (std::size_t s = 0; s < n; ++s)
    kernels::gemm(false, true, c, c, p, norm, phi.data().data() + s * c * p, p, phi.data().data() + s * c * p, p,
                  0.0, out.data() + s * c * c, c);
  Tensor g(Shape{n, c, c}, std::move(out));
  if (any_requires_grad({&phi})) {
    g.set_requires_grad(true);
    active_tape().record(g, {phi}, [phi, n, c, p, norm](std::span<const double> go) {
      auto gx = grad_sink(phi);
      std::vector<double> sym(c * c);
      for (std::size_t s = 0; s < n; ++s) {
        const double* gs = go.data() + s * c * c;
        for (std::size_t i = 0; i < c; ++i)
          for (std::size_t j = 0; j < c; ++j) sym[i * c + j] = gs[i * c + j] + gs[j * c + i];
        kernels::gemm(false, false, c, p, c, norm, sym.data(), c, phi.data().data() + s * c * p, p, 1.0,
                      gx.data() + s * c * p, p);
      }
    });
  }
  return g;
}

Tensor style_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& fx) {
  const auto fa = fx.features(a), fb = fx.features(b);
  Tensor total = l1_loss(gram_matrix(fa[0]), gram_matrix(fb[0]));
  for (std::size_t i = 1; i < fa.size(); ++i) total = total + l1_loss(gram_matrix(fa[i]), gram_matrix(fb[i]));
  return scale(total, 1.0 / static_cast<double>(fa.size()));
}

Tensor total_g2_loss(const LossTerms& t, const LossWeights& w) {
  validate(w);
  return scale(t.l1, w.l1) + scale(t.adv, w.adv) + scale(t.perceptual, w.perceptual) + scale(t.style, w.style);
}

Tensor feature_matching_loss(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.empty() || a.size() != b.size()) throw ShapeError("feature matching needs equal, non-empty feature lists");
  Tensor total = l1_loss(a[0], b[0]);
  for (std::size_t i = 1; i < a.size(); ++i) total = total + l1_loss(a[i], b[i]);
  return scale(total, 1.0 / static_cast<double>(a.size()));
}

}  // namespace inpaint

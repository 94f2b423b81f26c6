#pragma once

// Training objectives and the fixed feature extractor they read activations from.

#include <cstdint>
#include <vector>

#include "inpaint/tensor.hpp"

namespace inpaint {

struct LossWeights {
  double l1 = 1.0;
  double adv = 0.1;
  double perceptual = 0.1;
  double style = 250.0;
};

/// Throws std::invalid_argument if any weight is negative or not finite.
void validate(const LossWeights& w);

/// Frozen conv/ReLU stack with 2x average pooling between layers. Parameters
/// never require gradients, but gradients flow through to the input.
class FeatureExtractor {
 public:
  /// Seeded random stack; channel widths `widths` (input channels first).
  FeatureExtractor(std::vector<std::size_t> widths, std::uint64_t seed);
  /// Default desk-scale stack 3 -> 16 -> 32 -> 32 -> 64.
  static FeatureExtractor standard(std::uint64_t seed = 0x5eed);
  /// Single layer returning its input unchanged.
  static FeatureExtractor identity();

  /// One activation map per layer.
  std::vector<Tensor> features(const Tensor& image) const;
  /// Last activation map averaged over space: [N, C_last].
  Tensor pooled(const Tensor& image) const;

  std::size_t layer_count() const { return identity_ ? 1 : kernels_.size(); }

 private:
  FeatureExtractor() = default;
  bool identity_ = false;
  std::vector<Tensor> kernels_, biases_;
};

/// Mean absolute difference.
Tensor l1_loss(const Tensor& a, const Tensor& b);

struct AdversarialLosses {
  Tensor discriminator;  // -(E log D(real) + E log(1 - D(fake)))
  Tensor generator;      // -E log D(fake)
};

/// Logits in, sigmoid applied internally in log-sum-exp stable form.
AdversarialLosses adversarial_losses(const Tensor& real_logits, const Tensor& fake_logits);
/// -(E log D(real) + E log(1 - D(fake))) alone.
Tensor discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits);
/// -E log D(fake) alone.
Tensor generator_adversarial_loss(const Tensor& fake_logits);

/// Sum over layers of mean |phi_i(a) - phi_i(b)|.
Tensor perceptual_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& fx);

/// [N,C,H,W] -> [N,C,C], G = F F^T / (C*H*W) per sample.
Tensor gram_matrix(const Tensor& phi);

/// Mean over layers of mean |G(phi_j(a)) - G(phi_j(b))|.
Tensor style_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& fx);

struct LossTerms {
  Tensor l1, adv, perceptual, style;
};

Tensor total_g2_loss(const LossTerms& terms, const LossWeights& w);

/// Mean over feature-matching layers of mean |a_i - b_i|.
Tensor feature_matching_loss(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

}  // namespace inpaint

#pragma once

// Edge generator G1, its PatchGAN critic D1 and the adversarial training loop.

#include <cstdint>
#include <memory>
#include <vector>

#include "inpaint/batch.hpp"
#include "inpaint/checkpoint.hpp"
#include "inpaint/layers.hpp"
#include "inpaint/optim.hpp"

namespace inpaint {

struct EdgeNetConfig {
  std::size_t width = 32;  // stem width; the encoder doubles it twice
  std::size_t residual_blocks = 8;
  std::size_t dilation = 2;
  bool spectral = true;
};

/// 7x7 stem, two stride-2 convs, dilated residual blocks, two transposed
/// convs and a 7x7 head with sigmoid. Instance norm after every inner conv.
class EdgeGenerator {
 public:
  EdgeGenerator(const EdgeNetConfig& cfg, std::uint64_t seed);

  /// input [N,3,H,W] -> edge probabilities [N,1,H,W]; H and W divisible by 4.
  Tensor forward(const Tensor& input, ForwardMode mode);

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const EdgeNetConfig& config() const { return cfg_; }

 private:
  EdgeNetConfig cfg_;
  ParameterSet params_;
  std::vector<Conv> convs_;  // stem, down1, down2, up1, up2, head
  std::vector<Norm> norms_;  // after stem, down1, down2, up1, up2
  std::vector<ResidualBlock> blocks_;
};

/// Conditioning for G1: gray with holes, ground-truth edges with holes, and
/// the hole mask (1 = hole). Throws ShapeError on misaligned inputs.
Tensor g1_inputs(const Tensor& damaged_gray, const Tensor& damaged_edges, const Tensor& mask_paper);

/// Predicted edge map for damaged inputs.
Tensor g1_forward(EdgeGenerator& g1, const Tensor& damaged_gray, const Tensor& damaged_edges,
                  const Tensor& mask_paper, ForwardMode mode);

/// G1 prediction for a batch, hiding the hole region of gray and edges.
Tensor predict_edges(EdgeGenerator& g1, const Batch& batch, ForwardMode mode);

/// C_gt (1 - M) + C_pred M.
Tensor composite_edges(const Tensor& edges_gt, const Tensor& edges_pred, const Tensor& mask_paper);

struct EdgeTrainConfig {
  AdamOptions adam;
  double d_lr_ratio = 0.1;  // discriminator lr = ratio * adam.lr
  double adv_weight = 1.0;
  double fm_weight = 10.0;
  std::size_t d_width = 32;
  bool d_spectral = true;
  std::size_t divergence_steps = 100;
  double divergence_threshold = 1e-4;
};

struct EdgeStepStats {
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_fm = 0.0;
  double g_total = 0.0;
  double l1 = 0.0;  // mean |C_pred - C_gt|, monitoring only
};

/// Watches the discriminator loss and throws DivergenceError once it stays
/// below the threshold for the configured number of consecutive steps.
class DivergenceMonitor {
 public:
  DivergenceMonitor(std::size_t steps, double threshold) : steps_(steps), threshold_(threshold) {}
  void observe(double d_loss, std::int64_t step, const char* model);
  std::size_t run_length() const { return run_; }

 private:
  std::size_t steps_;
  double threshold_;
  std::size_t run_ = 0;
};

class EdgeTrainer {
 public:
  EdgeTrainer(const EdgeNetConfig& net, const EdgeTrainConfig& train, std::uint64_t seed);

  /// One D1 update followed by one G1 update.
  EdgeStepStats step(const Batch& batch);

  EdgeGenerator& generator() { return *g_; }
  PatchDiscriminator& discriminator() { return *d_; }
  std::int64_t steps_taken() const { return opt_g_->steps_taken(); }

  /// Networks, optimizer moments and the step counter.
  void store(Checkpoint& ckpt) const;
  void restore(const Checkpoint& ckpt);

 private:
  EdgeTrainConfig cfg_;
  std::unique_ptr<EdgeGenerator> g_;
  std::unique_ptr<PatchDiscriminator> d_;
  std::unique_ptr<Adam> opt_g_, opt_d_;
  DivergenceMonitor monitor_;
};

}  // namespace inpaint

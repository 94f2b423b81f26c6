#pragma once

// Image-completion model: structure grammar, input composition, the masked
// U-shaped generator G2, its critic D2 and the training loop.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "inpaint/batch.hpp"
#include "inpaint/checkpoint.hpp"
#include "inpaint/edge_model.hpp"
#include "inpaint/layers.hpp"
#include "inpaint/losses.hpp"
#include "inpaint/masked_conv.hpp"
#include "inpaint/optim.hpp"

namespace inpaint {

enum class ConvKind { C, CM };
enum class Stage { down, residual, up };

struct Segment {
  std::size_t count = 0;
  ConvKind kind = ConvKind::CM;
  Stage stage = Stage::down;

  bool operator==(const Segment&) const = default;
};

/// Parsed "n(K)-i(K)-j(K)" or "n(K)-j(K)" structure string, K in {C, CM}.
struct NetworkSpec {
  std::vector<Segment> segments;  // down, [residual,] up

  const Segment& down() const { return segments.front(); }
  const Segment& up() const { return segments.back(); }
  std::size_t depth() const { return down().count; }
  std::size_t residual_count() const { return segments.size() == 3 ? segments[1].count : 0; }
  ConvKind residual_kind() const { return segments.size() == 3 ? segments[1].kind : ConvKind::C; }

  bool operator==(const NetworkSpec&) const = default;
};

inline constexpr const char* kDefaultStructure = "4(CM)-6(CM)-4(CM)";

/// Throws ParseError (position of the offending character) on an unknown
/// kind, a negative or missing count, a wrong segment count or unequal
/// down/up counts.
NetworkSpec parse_structure(const std::string& text);
std::string to_string(const NetworkSpec& spec);

struct CompositionInputs {
  Tensor image_gt;    // [N,3,H,W]
  Tensor mask_paper;  // [N,1,H,W], 1 = hole
  Tensor edges_gt;    // [N,1,H,W]
  Tensor edges_pred;  // [N,1,H,W]
};

struct ComposedInputs {
  Tensor damaged;        // I_gt (1 - M)
  Tensor c_comp;         // C_gt (1 - M) + C_pred M
  Tensor validity_mask;  // 1 - M
};

ComposedInputs compose_inputs(const CompositionInputs& ci);

/// I_gt (1 - M) + I_pred M.
Tensor composite_output(const Tensor& pred, const Tensor& gt, const Tensor& mask_paper);

struct CompletionNetConfig {
  NetworkSpec spec = parse_structure(kDefaultStructure);
  std::size_t width = 32;  // first encoder width; doubles per stage up to 8x
  bool skip_links = true;
  bool residual_spectral = true;
  SConvNorm sconv_norm = SConvNorm::window_mean;
};

/// One convolution of G2 with its kind: CM runs SConv, C runs a plain
/// convolution while still tracking the mask.
class MaskedLayer {
 public:
  MaskedLayer() = default;
  MaskedLayer(ParameterSet& params, const std::string& name, const ConvSpec& spec, ConvKind kind, SConvNorm norm,
              Rng& rng);

  MaskedFeature forward(const MaskedFeature& x, ForwardMode mode);
  Tensor forward_mask(const Tensor& mask) const;
  ConvKind kind() const { return kind_; }

 private:
  Conv conv_;
  ConvKind kind_ = ConvKind::CM;
  SConvNorm norm_ = SConvNorm::window_mean;
};

class CompletionGenerator {
 public:
  CompletionGenerator(const CompletionNetConfig& cfg, std::uint64_t seed);

  /// I_pred [N,3,H,W] in [-1,1]. `mask_trace`, when given, receives the mask
  /// after every layer in execution order (skip joins included).
  Tensor forward(const Tensor& damaged, const Tensor& c_comp, const Tensor& validity_mask, ForwardMode mode,
                 std::vector<Tensor>* mask_trace = nullptr);

  /// The same mask chain computed from the validity mask alone.
  std::vector<Tensor> mask_trace(const Tensor& validity_mask) const;

  /// Throws ShapeError unless h and w are divisible by 2^depth.
  void check_input_size(std::size_t h, std::size_t w) const;
  std::size_t skip_link_count() const { return cfg_.skip_links ? cfg_.spec.depth() : 0; }

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const CompletionNetConfig& config() const { return cfg_; }

 private:
  struct ResBlock {
    MaskedLayer conv1, conv2;
    Norm norm1, norm2;
  };

  MaskedFeature join(const MaskedFeature& decoder, const MaskedFeature& encoder) const;

  CompletionNetConfig cfg_;
  ParameterSet params_;
  std::vector<MaskedLayer> down_, up_;
  std::vector<Norm> down_norm_, up_norm_;
  std::vector<ResBlock> res_;
  MaskedLayer head_;
};

/// G2 applied to composed inputs.
Tensor g2_forward(CompletionGenerator& g2, const ComposedInputs& in, ForwardMode mode);

struct CompletionTrainConfig {
  AdamOptions adam;
  double d_lr_ratio = 0.1;  // discriminator lr = ratio * adam.lr
  LossWeights weights;
  std::size_t d_width = 32;
  bool d_spectral = true;
  bool style_on_composite = true;  // Gram terms on I_comp instead of I_pred
  std::size_t divergence_steps = 100;
  double divergence_threshold = 1e-4;
  std::uint64_t extractor_seed = 0x5eed;
};

struct CompletionStepStats {
  double d_loss = 0.0;
  double l1 = 0.0;
  double adv = 0.0;
  double perceptual = 0.0;
  double style = 0.0;
  double total = 0.0;
  double hole_l1 = 0.0;  // mean |I_pred - I_gt| over hole pixels, [0,1] units
};

/// Mean absolute error inside the hole, images in [-1,1], result in [0,1]
/// units. 0 when the mask has no hole.
double hole_l1(const Tensor& pred, const Tensor& gt, const Tensor& mask_paper);

class CompletionTrainer {
 public:
  CompletionTrainer(const CompletionNetConfig& net, const CompletionTrainConfig& train, std::uint64_t seed);

  /// One D2 update followed by one G2 update. `c_comp` is the edge channel.
  CompletionStepStats step(const Batch& batch, const Tensor& c_comp);

  CompletionGenerator& generator() { return *g_; }
  PatchDiscriminator& discriminator() { return *d_; }
  std::int64_t steps_taken() const { return opt_g_->steps_taken(); }

  void store(Checkpoint& ckpt) const;
  void restore(const Checkpoint& ckpt);

 private:
  CompletionTrainConfig cfg_;
  std::unique_ptr<CompletionGenerator> g_;
  std::unique_ptr<PatchDiscriminator> d_;
  FeatureExtractor fx_;
  std::unique_ptr<Adam> opt_g_, opt_d_;
  DivergenceMonitor monitor_;
};

}  // namespace inpaint

#pragma once

// Network building blocks: parameter registry, normalizations, spectral
// normalization, convolution layers, residual blocks and the 70x70 PatchGAN.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "inpaint/ops.hpp"
#include "inpaint/tensor.hpp"

namespace inpaint {

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// How a forward pass treats normalization statistics and persistent state.
struct ForwardMode {
  bool batch_stats = true;   // batch norm uses batch statistics
  bool update_state = true;  // running stats and spectral vectors advance
};
inline constexpr ForwardMode kTrain{true, true};
inline constexpr ForwardMode kEval{false, false};
/// Batch statistics without side effects; makes a forward pass a pure function.
inline constexpr ForwardMode kFrozenTrain{true, false};

enum class NormKind { none, batch, instance };
enum class Activation { none, relu, leaky_relu, sigmoid, tanh };

Tensor activate(const Tensor& x, Activation act);

/// Ordered, uniquely named tensors. Trainable entries are optimized; the rest
/// (running statistics, spectral vectors) are persistent buffers.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable;
  };

  /// Registers `t` under `name`; throws std::invalid_argument on duplicates.
  Tensor add(const std::string& name, Tensor t, bool trainable = true);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<Tensor> trainable() const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t trainable_count() const;

  /// Overwrites values in place from a set with identical names and shapes.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<Entry> entries_;
};

/// x [N,C,H,W]; gamma/beta/running stats [C]. Running stats are updated in
/// place (momentum 0.9) when mode.batch_stats && mode.update_state.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, ForwardMode mode);

/// Per-(sample, channel) normalization over H and W.
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);

struct SpectralState {
  Tensor u;  // [rows], rows = weight.dim(0)
  Tensor v;  // [cols], cols = numel / rows
};

SpectralState make_spectral_state(const Tensor& weight, Rng& rng);

/// Runs `iterations` power-iteration steps on `state` (in place), then
/// returns weight / sigma with sigma = u^T W v. Differentiable in `weight`;
/// u and v are constants of the backward pass.
Tensor spectral_normalize(const Tensor& weight, SpectralState& state, int iterations = 1);

/// sigma = u^T W v for the current state, without updating it.
double spectral_sigma(const Tensor& weight, const SpectralState& state);

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  bool transpose = false;
  bool spectral = false;
  bool bias = true;
};

/// Convolution (or transposed convolution) whose parameters live in a
/// ParameterSet. Kaiming fan-in initialization, zero bias.
class Conv {
 public:
  Conv() = default;
  Conv(ParameterSet& params, const std::string& name, const ConvSpec& spec, Rng& rng);

  /// Weight after spectral normalization (when enabled).
  Tensor effective_weight(ForwardMode mode);
  Tensor forward(const Tensor& x, ForwardMode mode);

  const ConvSpec& spec() const { return spec_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  ConvOptions options() const { return {spec_.stride, spec_.padding, spec_.dilation}; }

 private:
  ConvSpec spec_;
  Tensor weight_, bias_;
  std::optional<SpectralState> spectral_;
};

class Norm {
 public:
  Norm() = default;
  Norm(ParameterSet& params, const std::string& name, NormKind kind, std::size_t channels);

  Tensor forward(const Tensor& x, ForwardMode mode);
  NormKind kind() const { return kind_; }

 private:
  NormKind kind_ = NormKind::none;
  Tensor gamma_, beta_, running_mean_, running_var_;
};

struct ResidualSpec {
  std::size_t channels = 64;
  std::size_t dilation = 1;
  NormKind norm = NormKind::instance;
  bool spectral = true;
};

/// x + F(x), F = conv(dilated) - norm - ReLU - conv - norm, 3x3 kernels.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParameterSet& params, const std::string& name, const ResidualSpec& spec, Rng& rng);

  Tensor forward(const Tensor& x, ForwardMode mode);
  Conv& first() { return conv1_; }
  Conv& second() { return conv2_; }

 private:
  ResidualSpec spec_;
  Conv conv1_, conv2_;
  Norm norm1_, norm2_;
};

/// 70x70 PatchGAN: kernel-4 convs with strides 2,2,2,1,1, widths w,2w,4w,8w,1,
/// LeakyReLU(0.2) between layers, raw logits out.
class PatchDiscriminator {
 public:
  static constexpr std::size_t kReceptiveField = 70;

  PatchDiscriminator(std::size_t in_channels, std::size_t width, bool spectral, std::uint64_t seed);

  /// Logits [N,1,H',W']. When `features` is given it receives the four
  /// intermediate activations (used for feature matching).
  Tensor forward(const Tensor& x, ForwardMode mode, std::vector<Tensor>* features = nullptr);

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  ParameterSet params_;
  std::vector<Conv> layers_;
  bool warned_small_input_ = false;
};

/// Number of output positions along one axis for the PatchGAN schedule.
std::size_t patchgan_output_extent(std::size_t in);

}  // namespace inpaint

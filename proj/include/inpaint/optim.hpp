#pragma once

#include <cstdint>
#include <vector>

#include "inpaint/tensor.hpp"

namespace inpaint {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  double eps = 1e-8;
};

/// Same options with the learning rate scaled by `lr_ratio`.
inline AdamOptions discriminator_adam(AdamOptions opt, double lr_ratio) {
  opt.lr *= lr_ratio;
  return opt;
}

/// First/second-moment adaptive update with bias correction. Reads each
/// parameter's accumulated gradient, updates in place and zeroes the gradient.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions opt);

  void step();
  void zero_grad();

  std::int64_t steps_taken() const { return t_; }
  void set_steps_taken(std::int64_t t) { t_ = t; }
  const std::vector<Tensor>& params() const { return params_; }
  /// Moment buffers, exposed for checkpointing. Same order as params().
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const AdamOptions& options() const { return opt_; }

 private:
  std::vector<Tensor> params_;
  std::vector<Tensor> m_, v_;
  AdamOptions opt_;
  std::int64_t t_ = 0;
};

}  // namespace inpaint

#include "inpaint/optim.hpp"

#include <cmath>

#include "inpaint/error.hpp"

namespace inpaint {

Adam::Adam(std::vector<Tensor> params, AdamOptions opt) : params_(std::move(params)), opt_(opt) {
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p.shape()));
    v_.push_back(Tensor::zeros(p.shape()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    auto g = grad_sink(p);
    auto w = p.mutable_data();
    auto m = m_[k].mutable_data();
    auto v = v_[k].mutable_data();
    if (m.size() != w.size()) throw ShapeError("optimizer state does not match parameter shape");
    const double b1 = opt_.beta1, b2 = opt_.beta2, step = opt_.lr / bc1, inv_bc2 = 1.0 / bc2, eps = opt_.eps;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
      g[i] = 0.0;
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace inpaint

#include "inpaint/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "inpaint/error.hpp"
#include "inpaint/log.hpp"

namespace inpaint {

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::none: return x;
    case Activation::relu: return relu(x);
    case Activation::leaky_relu: return leaky_relu(x, kLeakySlope);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return inpaint::tanh(x);
  }
  return x;
}

// ---------------------------------------------------------------------------

Tensor ParameterSet::add(const std::string& name, Tensor t, bool trainable) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  t.set_requires_grad(trainable);
  entries_.push_back(Entry{name, t, trainable});
  return t;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::out_of_range("no parameter named " + name);
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

std::vector<Tensor> ParameterSet::trainable() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

std::size_t ParameterSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.tensor.numel();
  return n;
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  for (auto& e : entries_) {
    const Tensor& src = other.at(e.name);
    if (src.shape() != e.tensor.shape())
      throw ShapeError("parameter " + e.name + ": shape " + shape_str(src.shape()) +
                       " does not match " + shape_str(e.tensor.shape()));
    std::copy(src.data().begin(), src.data().end(), e.tensor.mutable_data().begin());
  }
}

// ---------------------------------------------------------------------------

namespace {

void check_norm_args(const Tensor& x, const Tensor& gamma, const Tensor& beta, const char* op) {
  if (x.ndim() != 4) throw ShapeError(std::string(op) + " expects [N,C,H,W], got " + shape_str(x.shape()));
  const Shape ch{x.dim(1)};
  if (gamma.shape() != ch || beta.shape() != ch)
    throw ShapeError(std::string(op) + ": gamma/beta must have shape " + shape_str(ch));
}

// Normalizes x over groups. per_sample=false: group = channel over (N,H,W);
// per_sample=true: group = (sample, channel) over (H,W).
struct GroupStats {
  std::vector<double> mean, inv_std;
};

GroupStats group_stats(const Tensor& x, bool per_sample) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const std::size_t groups = per_sample ? n * c : c;
  const double count = static_cast<double>(per_sample ? hw : n * hw);
  GroupStats s;
  s.mean.assign(groups, 0.0);
  s.inv_std.assign(groups, 0.0);
  std::vector<double> var(groups, 0.0);
  const auto xv = x.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t grp = per_sample ? i * c + ch : ch;
      const double* p = xv.data() + (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) s.mean[grp] += p[k];
    }
  for (auto& m : s.mean) m /= count;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t grp = per_sample ? i * c + ch : ch;
      const double* p = xv.data() + (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) var[grp] += (p[k] - s.mean[grp]) * (p[k] - s.mean[grp]);
    }
  for (std::size_t g = 0; g < groups; ++g) {
    var[g] /= count;
    s.inv_std[g] = 1.0 / std::sqrt(var[g] + kNormEpsilon);
  }
  return s;
}

Tensor normalize_with_batch_stats(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                  bool per_sample, GroupStats* stats_out) {
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  GroupStats st = group_stats(x, per_sample);
  const auto xv = x.data();
  const auto gv = gamma.data(), bv = beta.data();
  std::vector<double> xhat(xv.size()), out(xv.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t grp = per_sample ? i * c + ch : ch;
      const std::size_t base = (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        xhat[base + k] = (xv[base + k] - st.mean[grp]) * st.inv_std[grp];
        out[base + k] = gv[ch] * xhat[base + k] + bv[ch];
      }
    }
  Tensor y(x.shape(), std::move(out));
  if (stats_out) *stats_out = st;
  if (any_requires_grad({&x, &gamma, &beta})) {
    y.set_requires_grad(true);
    active_tape().record(
        y, {x, gamma, beta},
        [x, gamma, beta, per_sample, n, c, hw, xhat = std::move(xhat),
         inv = st.inv_std](std::span<const double> g) {
          const std::size_t groups = per_sample ? n * c : c;
          const double count = static_cast<double>(per_sample ? hw : n * hw);
          const auto gv = gamma.data();
          auto gg = grad_sink(gamma);
          auto gb = grad_sink(beta);
          auto gx = grad_sink(x);
          std::vector<double> sum_d(groups, 0.0), sum_dx(groups, 0.0);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t grp = per_sample ? i * c + ch : ch;
              const std::size_t base = (i * c + ch) * hw;
              for (std::size_t k = 0; k < hw; ++k) {
                const double go = g[base + k];
                if (!gg.empty()) gg[ch] += go * xhat[base + k];
                if (!gb.empty()) gb[ch] += go;
                const double d = go * gv[ch];
                sum_d[grp] += d;
                sum_dx[grp] += d * xhat[base + k];
              }
            }
          if (gx.empty()) return;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t grp = per_sample ? i * c + ch : ch;
              const std::size_t base = (i * c + ch) * hw;
              const double scale = inv[grp] / count;
              for (std::size_t k = 0; k < hw; ++k) {
                const double d = g[base + k] * gv[ch];
                gx[base + k] += scale * (count * d - sum_d[grp] - xhat[base + k] * sum_dx[grp]);
              }
            }
        });
  }
  return y;
}

}  // namespace

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, ForwardMode mode) {
  check_norm_args(x, gamma, beta, "batch_norm");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (mode.batch_stats) {
    GroupStats st;
    Tensor y = normalize_with_batch_stats(x, gamma, beta, false, &st);
    if (mode.update_state) {
      auto rm = running_mean.mutable_data();
      auto rv = running_var.mutable_data();
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double var = 1.0 / (st.inv_std[ch] * st.inv_std[ch]) - kNormEpsilon;
        rm[ch] = kBatchNormMomentum * rm[ch] + (1.0 - kBatchNormMomentum) * st.mean[ch];
        rv[ch] = kBatchNormMomentum * rv[ch] + (1.0 - kBatchNormMomentum) * var;
      }
    }
    return y;
  }
  // Inference: a fixed per-channel affine map.
  const auto rm = running_mean.data(), rv = running_var.data();
  std::vector<double> inv(c);
  for (std::size_t ch = 0; ch < c; ++ch) inv[ch] = 1.0 / std::sqrt(rv[ch] + kNormEpsilon);
  const auto xv = x.data();
  const auto gv = gamma.data(), bv = beta.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * hw;
      for (std::size_t k = 0; k < hw; ++k)
        out[base + k] = gv[ch] * (xv[base + k] - rm[ch]) * inv[ch] + bv[ch];
    }
  Tensor y(x.shape(), std::move(out));
  if (any_requires_grad({&x, &gamma, &beta})) {
    y.set_requires_grad(true);
    Tensor rmean = running_mean.detach();
    active_tape().record(y, {x, gamma, beta},
                         [x, gamma, beta, rmean, inv, n, c, hw](std::span<const double> g) {
                           const auto xv = x.data();
                           const auto gv = gamma.data();
                           const auto rm = rmean.data();
                           auto gx = grad_sink(x);
                           auto gg = grad_sink(gamma);
                           auto gb = grad_sink(beta);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t ch = 0; ch < c; ++ch) {
                               const std::size_t base = (i * c + ch) * hw;
                               for (std::size_t k = 0; k < hw; ++k) {
                                 const double go = g[base + k];
                                 if (!gx.empty()) gx[base + k] += go * gv[ch] * inv[ch];
                                 if (!gg.empty()) gg[ch] += go * (xv[base + k] - rm[ch]) * inv[ch];
                                 if (!gb.empty()) gb[ch] += go;
                               }
                             }
                         });
  }
  return y;
}

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  check_norm_args(x, gamma, beta, "instance_norm");
  return normalize_with_batch_stats(x, gamma, beta, true, nullptr);
}

// ---------------------------------------------------------------------------

namespace {

void normalize_in_place(std::vector<double>& v) {
  double n2 = 0.0;
  for (double e : v) n2 += e * e;
  const double norm = std::max(std::sqrt(n2), 1e-12);
  for (double& e : v) e /= norm;
}

// W is rows x cols row-major.
std::vector<double> mat_vec(std::span<const double> w, const std::vector<double>& v,
                            std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < cols; ++k) acc += w[r * cols + k] * v[k];
    out[r] = acc;
  }
  return out;
}

std::vector<double> mat_t_vec(std::span<const double> w, const std::vector<double>& u,
                              std::size_t rows, std::size_t cols) {
  std::vector<double> out(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < cols; ++k) out[k] += w[r * cols + k] * u[r];
  return out;
}

std::pair<std::size_t, std::size_t> matrix_dims(const Tensor& w) {
  const std::size_t rows = w.dim(0);
  return {rows, w.numel() / rows};
}

}  // namespace

SpectralState make_spectral_state(const Tensor& weight, Rng& rng) {
  const auto [rows, cols] = matrix_dims(weight);
  std::vector<double> u(rows);
  for (auto& e : u) e = rng.normal();
  normalize_in_place(u);
  std::vector<double> v = mat_t_vec(weight.data(), u, rows, cols);
  normalize_in_place(v);
  return {Tensor({rows}, u), Tensor({cols}, v)};
}

double spectral_sigma(const Tensor& weight, const SpectralState& state) {
  const auto [rows, cols] = matrix_dims(weight);
  std::vector<double> v(state.v.data().begin(), state.v.data().end());
  const auto wv = mat_vec(weight.data(), v, rows, cols);
  const auto u = state.u.data();
  double sigma = 0.0;
  for (std::size_t r = 0; r < rows; ++r) sigma += u[r] * wv[r];
  return sigma;
}

Tensor spectral_normalize(const Tensor& weight, SpectralState& state, int iterations) {
  const auto [rows, cols] = matrix_dims(weight);
  if (state.u.numel() != rows || state.v.numel() != cols)
    throw ShapeError("spectral state does not match weight " + shape_str(weight.shape()));
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> u(state.u.data().begin(), state.u.data().end());
    std::vector<double> v = mat_t_vec(weight.data(), u, rows, cols);
    normalize_in_place(v);
    u = mat_vec(weight.data(), v, rows, cols);
    normalize_in_place(u);
    std::copy(u.begin(), u.end(), state.u.mutable_data().begin());
    std::copy(v.begin(), v.end(), state.v.mutable_data().begin());
  }
  const double sigma = std::max(spectral_sigma(weight, state), 1e-12);
  const auto wv = weight.data();
  std::vector<double> out(wv.size());
  for (std::size_t i = 0; i < wv.size(); ++i) out[i] = wv[i] / sigma;
  Tensor y(weight.shape(), std::move(out));
  if (any_requires_grad({&weight})) {
    y.set_requires_grad(true);
    Tensor u = state.u.detach(), v = state.v.detach();
    active_tape().record(y, {weight}, [weight, u, v, sigma, rows, cols](std::span<const double> g) {
      // d(W/s)/dW: G/s - <G, W>/s^2 * u v^T
      const auto wv = weight.data();
      double inner = 0.0;
      for (std::size_t i = 0; i < wv.size(); ++i) inner += g[i] * wv[i];
      auto gw = grad_sink(weight);
      const auto ud = u.data(), vd = v.data();
      const double k = inner / (sigma * sigma);
      for (std::size_t r = 0; r < rows; ++r) {
        const double ku = k * ud[r];
        for (std::size_t c = 0; c < cols; ++c) gw[r * cols + c] += g[r * cols + c] / sigma - ku * vd[c];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------

Conv::Conv(ParameterSet& params, const std::string& name, const ConvSpec& spec, Rng& rng)
    : spec_(spec) {
  const Shape wshape = spec.transpose
                           ? Shape{spec.in_channels, spec.out_channels, spec.kernel, spec.kernel}
                           : Shape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  double fan_in = static_cast<double>(spec.in_channels * spec.kernel * spec.kernel);
  if (spec.transpose) fan_in /= static_cast<double>(spec.stride * spec.stride);
  weight_ = params.add(name + ".weight", Tensor::randn(wshape, rng, std::sqrt(2.0 / fan_in)));
  if (spec.bias) bias_ = params.add(name + ".bias", Tensor::zeros({spec.out_channels}));
  if (spec.spectral) {
    spectral_ = make_spectral_state(weight_, rng);
    params.add(name + ".sn_u", spectral_->u, false);
    params.add(name + ".sn_v", spectral_->v, false);
  }
}

Tensor Conv::effective_weight(ForwardMode mode) {
  if (!spectral_) return weight_;
  return spectral_normalize(weight_, *spectral_, mode.update_state ? 1 : 0);
}

Tensor Conv::forward(const Tensor& x, ForwardMode mode) {
  const Tensor w = effective_weight(mode);
  return spec_.transpose ? conv2d_transpose(x, w, bias_, options()) : conv2d(x, w, bias_, options());
}

Norm::Norm(ParameterSet& params, const std::string& name, NormKind kind, std::size_t channels)
    : kind_(kind) {
  if (kind == NormKind::none) return;
  gamma_ = params.add(name + ".gamma", Tensor::ones({channels}));
  beta_ = params.add(name + ".beta", Tensor::zeros({channels}));
  if (kind == NormKind::batch) {
    running_mean_ = params.add(name + ".running_mean", Tensor::zeros({channels}), false);
    running_var_ = params.add(name + ".running_var", Tensor::ones({channels}), false);
  }
}

Tensor Norm::forward(const Tensor& x, ForwardMode mode) {
  switch (kind_) {
    case NormKind::none: return x;
    case NormKind::instance: return instance_norm(x, gamma_, beta_);
    case NormKind::batch: return batch_norm(x, gamma_, beta_, running_mean_, running_var_, mode);
  }
  return x;
}

ResidualBlock::ResidualBlock(ParameterSet& params, const std::string& name,
                             const ResidualSpec& spec, Rng& rng)
    : spec_(spec) {
  conv1_ = Conv(params, name + ".conv1",
                {.in_channels = spec.channels, .out_channels = spec.channels, .kernel = 3,
                 .padding = spec.dilation, .dilation = spec.dilation, .spectral = spec.spectral},
                rng);
  norm1_ = Norm(params, name + ".norm1", spec.norm, spec.channels);
  conv2_ = Conv(params, name + ".conv2",
                {.in_channels = spec.channels, .out_channels = spec.channels, .kernel = 3,
                 .padding = 1, .spectral = spec.spectral},
                rng);
  norm2_ = Norm(params, name + ".norm2", spec.norm, spec.channels);
}

Tensor ResidualBlock::forward(const Tensor& x, ForwardMode mode) {
  if (x.ndim() != 4 || x.dim(1) != spec_.channels)
    throw ShapeError("residual block expects " + std::to_string(spec_.channels) +
                     " channels, got " + shape_str(x.shape()));
  Tensor h = relu(norm1_.forward(conv1_.forward(x, mode), mode));
  h = norm2_.forward(conv2_.forward(h, mode), mode);
  return x + h;
}

// ---------------------------------------------------------------------------

PatchDiscriminator::PatchDiscriminator(std::size_t in_channels, std::size_t width, bool spectral,
                                       std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t widths[] = {width, 2 * width, 4 * width, 8 * width, 1};
  const std::size_t strides[] = {2, 2, 2, 1, 1};
  std::size_t in = in_channels;
  for (std::size_t i = 0; i < 5; ++i) {
    layers_.emplace_back(params_, "layer" + std::to_string(i),
                         ConvSpec{.in_channels = in, .out_channels = widths[i], .kernel = 4,
                                  .stride = strides[i], .padding = 1, .spectral = spectral},
                         rng);
    in = widths[i];
  }
}

std::size_t patchgan_output_extent(std::size_t in) {
  std::size_t e = in;
  for (std::size_t s : {2, 2, 2, 1, 1}) {
    if (e + 2 < 4) return 0;
    e = (e + 2 - 4) / s + 1;
  }
  return e;
}

Tensor PatchDiscriminator::forward(const Tensor& x, ForwardMode mode,
                                   std::vector<Tensor>* features) {
  if (x.ndim() != 4) throw ShapeError("discriminator expects [N,C,H,W], got " + shape_str(x.shape()));
  if (!warned_small_input_ && (x.dim(2) < kReceptiveField || x.dim(3) < kReceptiveField)) {
    warned_small_input_ = true;
    warn("discriminator input " + shape_str(x.shape()) +
         " is smaller than the 70x70 receptive field; zero padding fills the rest");
  }
  if (features) features->clear();
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h, mode);
    if (i + 1 < layers_.size()) {
      h = leaky_relu(h, kLeakySlope);
      if (features) features->push_back(h);
    }
  }
  return h;
}

}  // namespace inpaint

#include "inpaint/edge_model.hpp"

#include <cmath>
#include <sstream>

#include "inpaint/error.hpp"
#include "inpaint/losses.hpp"

namespace inpaint {

namespace {

void require_plane(const Tensor& t, const Shape& like, const char* what) {
  if (t.ndim() != 4 || t.dim(1) != 1 || t.dim(0) != like[0] || t.dim(2) != like[2] || t.dim(3) != like[3])
    throw ShapeError(std::string("g1: ") + what + " must be [N,1,H,W] aligned with " + shape_str(like) + ", got " +
                     shape_str(t.shape()));
}

Tensor one_minus(const Tensor& m) { return add_scalar(scale(m, -1.0), 1.0); }

}  // namespace

EdgeGenerator::EdgeGenerator(const EdgeNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(seed);
  const std::size_t w = cfg.width;
  const bool sn = cfg.spectral;
  convs_.emplace_back(params_, "stem", ConvSpec{.in_channels = 3, .out_channels = w, .kernel = 7, .padding = 3, .spectral = sn}, rng);
  convs_.emplace_back(params_, "down1",
                      ConvSpec{.in_channels = w, .out_channels = 2 * w, .kernel = 4, .stride = 2, .padding = 1, .spectral = sn}, rng);
  convs_.emplace_back(params_, "down2",
                      ConvSpec{.in_channels = 2 * w, .out_channels = 4 * w, .kernel = 4, .stride = 2, .padding = 1, .spectral = sn}, rng);
  for (std::size_t i = 0; i < cfg.residual_blocks; ++i)
    blocks_.emplace_back(params_, "res" + std::to_string(i),
                         ResidualSpec{.channels = 4 * w, .dilation = cfg.dilation, .norm = NormKind::instance, .spectral = sn},
                         rng);
  convs_.emplace_back(params_, "up1",
                      ConvSpec{.in_channels = 4 * w, .out_channels = 2 * w, .kernel = 4, .stride = 2, .padding = 1,
                               .transpose = true, .spectral = sn},
                      rng);
  convs_.emplace_back(params_, "up2",
                      ConvSpec{.in_channels = 2 * w, .out_channels = w, .kernel = 4, .stride = 2, .padding = 1,
                               .transpose = true, .spectral = sn},
                      rng);
  convs_.emplace_back(params_, "head", ConvSpec{.in_channels = w, .out_channels = 1, .kernel = 7, .padding = 3}, rng);
  const std::size_t norm_widths[] = {w, 2 * w, 4 * w, 2 * w, w};
  const char* norm_names[] = {"stem", "down1", "down2", "up1", "up2"};
  for (int i = 0; i < 5; ++i)
    norms_.emplace_back(params_, std::string(norm_names[i]) + ".norm", NormKind::instance, norm_widths[i]);
}

Tensor EdgeGenerator::forward(const Tensor& input, ForwardMode mode) {
  if (input.ndim() != 4 || input.dim(1) != 3)
    throw ShapeError("edge generator expects [N,3,H,W], got " + shape_str(input.shape()));
  if (input.dim(2) % 4 || input.dim(3) % 4)
    throw ShapeError("edge generator needs H and W divisible by 4, got " + shape_str(input.shape()));
  Tensor h = input;
  for (int i = 0; i < 3; ++i) h = relu(norms_[i].forward(convs_[i].forward(h, mode), mode));
  for (auto& b : blocks_) h = b.forward(h, mode);
  for (int i = 3; i < 5; ++i) h = relu(norms_[i].forward(convs_[i].forward(h, mode), mode));
  return sigmoid(convs_[5].forward(h, mode));
}

Tensor g1_inputs(const Tensor& damaged_gray, const Tensor& damaged_edges, const Tensor& mask_paper) {
  if (damaged_gray.ndim() != 4 || damaged_gray.dim(1) != 1)
    throw ShapeError("g1: gray must be [N,1,H,W], got " + shape_str(damaged_gray.shape()));
  require_plane(damaged_edges, damaged_gray.shape(), "edges");
  require_plane(mask_paper, damaged_gray.shape(), "mask");
  return concat({damaged_gray, damaged_edges, mask_paper}, 1);
}

Tensor g1_forward(EdgeGenerator& g1, const Tensor& damaged_gray, const Tensor& damaged_edges,
                  const Tensor& mask_paper, ForwardMode mode) {
  return g1.forward(g1_inputs(damaged_gray, damaged_edges, mask_paper), mode);
}

Tensor predict_edges(EdgeGenerator& g1, const Batch& batch, ForwardMode mode) {
  const Tensor keep = one_minus(batch.mask_paper);
  return g1_forward(g1, batch.gray * keep, batch.edges * keep, batch.mask_paper, mode);
}

Tensor composite_edges(const Tensor& edges_gt, const Tensor& edges_pred, const Tensor& mask_paper) {
  require_plane(edges_pred, edges_gt.shape(), "predicted edges");
  require_plane(mask_paper, edges_gt.shape(), "mask");
  return edges_gt * one_minus(mask_paper) + edges_pred * mask_paper;
}

void DivergenceMonitor::observe(double d_loss, std::int64_t step, const char* model) {
  run_ = d_loss < threshold_ ? run_ + 1 : 0;
  if (steps_ > 0 && run_ >= steps_) {
    std::ostringstream os;
    os << model << " training diverged at step " << step << ": discriminator loss stayed below " << threshold_
       << " for " << run_ << " consecutive steps (last " << d_loss << ")";
    throw DivergenceError(os.str());
  }
}

EdgeTrainer::EdgeTrainer(const EdgeNetConfig& net, const EdgeTrainConfig& train, std::uint64_t seed)
    : cfg_(train),
      g_(std::make_unique<EdgeGenerator>(net, seed)),
      d_(std::make_unique<PatchDiscriminator>(2, train.d_width, train.d_spectral, seed + 1)),
      opt_g_(std::make_unique<Adam>(g_->params().trainable(), train.adam)),
      opt_d_(std::make_unique<Adam>(d_->params().trainable(), discriminator_adam(train.adam, train.d_lr_ratio))),
      monitor_(train.divergence_steps, train.divergence_threshold) {}

EdgeStepStats EdgeTrainer::step(const Batch& batch) {
  EdgeStepStats stats;
  Tape tape_g, tape_d;
  Tensor pred;
  {
    TapeScope scope(tape_g);
    pred = predict_edges(*g_, batch, kTrain);
  }
  const Tensor real_in = concat({batch.edges, batch.gray}, 1);
  {
    TapeScope scope(tape_d);
    const Tensor real = d_->forward(real_in, kTrain);
    const Tensor fake = d_->forward(concat({pred.detach(), batch.gray}, 1), kTrain);
    const Tensor loss = discriminator_loss(real, fake);
    stats.d_loss = loss.item();
    opt_d_->zero_grad();
    tape_d.backward(loss);
    opt_d_->step();
  }
  tape_d.clear();
  {
    TapeScope scope(tape_g);
    std::vector<Tensor> real_features, fake_features;
    {
      NoGradScope no_grad;
      d_->forward(real_in, kFrozenTrain, &real_features);
    }
    const Tensor fake = d_->forward(concat({pred, batch.gray}, 1), kFrozenTrain, &fake_features);
    const Tensor adv = generator_adversarial_loss(fake);
    const Tensor fm = feature_matching_loss(fake_features, real_features);
    const Tensor total = cfg_.adv_weight * adv + cfg_.fm_weight * fm;
    stats.g_adv = adv.item();
    stats.g_fm = fm.item();
    stats.g_total = total.item();
    opt_g_->zero_grad();
    tape_g.backward(total);
    opt_g_->step();
  }
  tape_g.clear();
  opt_d_->zero_grad();
  {
    NoGradScope no_grad;
    stats.l1 = l1_loss(pred, batch.edges).item();
  }
  monitor_.observe(stats.d_loss, steps_taken(), "edge model");
  return stats;
}

void EdgeTrainer::store(Checkpoint& ckpt) const {
  store_parameters(ckpt, g_->params(), "g1.");
  store_parameters(ckpt, d_->params(), "d1.");
  store_optimizer(ckpt, *opt_g_, "g1.adam.");
  store_optimizer(ckpt, *opt_d_, "d1.adam.");
}

void EdgeTrainer::restore(const Checkpoint& ckpt) {
  restore_parameters(ckpt, g_->params(), "g1.");
  restore_parameters(ckpt, d_->params(), "d1.");
  restore_optimizer(ckpt, *opt_g_, "g1.adam.");
  restore_optimizer(ckpt, *opt_d_, "d1.adam.");
}

}  // namespace inpaint

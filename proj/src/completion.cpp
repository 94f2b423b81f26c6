#include "inpaint/completion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "inpaint/error.hpp"

namespace inpaint {

namespace {

constexpr std::size_t kMaxCount = 64;

const char* kind_name(ConvKind k) { return k == ConvKind::CM ? "CM" : "C"; }

Tensor one_minus(const Tensor& m) { return add_scalar(scale(m, -1.0), 1.0); }

Tensor mask_union(const Tensor& a, const Tensor& b) {
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(x[i], y[i]);
  return Tensor(a.shape(), std::move(out));
}

}  // namespace

NetworkSpec parse_structure(const std::string& text) {
  NetworkSpec spec;
  std::vector<std::size_t> starts;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t index = spec.segments.size() + 1;
    const std::string seg = "segment " + std::to_string(index);
    starts.push_back(pos);
    if (pos >= text.size()) throw ParseError(seg + " is empty", pos);
    if (text[pos] == '-') throw ParseError(seg + " has a negative or missing count", pos);
    if (!std::isdigit(static_cast<unsigned char>(text[pos])))
      throw ParseError(seg + ": expected a count, found '" + std::string(1, text[pos]) + "'", pos);
    std::size_t count = 0;
    const std::size_t count_start = pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
      count = count * 10 + static_cast<std::size_t>(text[pos] - '0');
      if (count > kMaxCount) throw ParseError(seg + ": count exceeds " + std::to_string(kMaxCount), count_start);
      ++pos;
    }
    if (pos >= text.size() || text[pos] != '(') throw ParseError(seg + ": expected '(' after the count", pos);
    ++pos;
    const std::size_t kind_start = pos;
    while (pos < text.size() && std::isalpha(static_cast<unsigned char>(text[pos]))) ++pos;
    const std::string token = text.substr(kind_start, pos - kind_start);
    ConvKind kind;
    if (token == "CM") {
      kind = ConvKind::CM;
    } else if (token == "C") {
      kind = ConvKind::C;
    } else {
      throw ParseError(seg + ": unknown kind token '" + token + "' (expected C or CM)", kind_start);
    }
    if (pos >= text.size() || text[pos] != ')') throw ParseError(seg + ": expected ')' after the kind", pos);
    ++pos;
    spec.segments.push_back({count, kind, Stage::down});
    if (pos == text.size()) break;
    if (text[pos] != '-') throw ParseError(seg + ": expected '-' between segments", pos);
    ++pos;
    if (spec.segments.size() == 3) throw ParseError("too many segments (at most 3)", pos);
  }
  if (spec.segments.size() < 2) throw ParseError("structure needs 2 or 3 segments", text.size());
  if (spec.segments.size() == 3) spec.segments[1].stage = Stage::residual;
  spec.segments.back().stage = Stage::up;
  if (spec.down().count != spec.up().count)
    throw ParseError("segment " + std::to_string(spec.segments.size()) + ": " + std::to_string(spec.up().count) +
                         " upsampling stages do not mirror " + std::to_string(spec.down().count) + " downsampling stages",
                     starts.back());
  return spec;
}

std::string to_string(const NetworkSpec& spec) {
  std::string out;
  for (std::size_t i = 0; i < spec.segments.size(); ++i) {
    if (i) out += '-';
    out += std::to_string(spec.segments[i].count) + "(" + kind_name(spec.segments[i].kind) + ")";
  }
  return out;
}

ComposedInputs compose_inputs(const CompositionInputs& ci) {
  const Tensor& m = ci.mask_paper;
  require_binary_mask(m, "compose_inputs");
  const Shape& s = ci.image_gt.shape();
  if (ci.image_gt.ndim() != 4 || s[0] != m.dim(0) || s[2] != m.dim(2) || s[3] != m.dim(3))
    throw ShapeError("compose_inputs: image " + shape_str(s) + " does not align with mask " + shape_str(m.shape()));
  for (const Tensor* e : {&ci.edges_gt, &ci.edges_pred})
    if (e->shape() != m.shape())
      throw ShapeError("compose_inputs: edge map " + shape_str(e->shape()) + " does not align with mask " +
                       shape_str(m.shape()));
  const Tensor keep = one_minus(m);
  return {ci.image_gt * repeat_channels(keep, s[1]), ci.edges_gt * keep + ci.edges_pred * m, keep};
}

Tensor composite_output(const Tensor& pred, const Tensor& gt, const Tensor& mask_paper) {
  if (pred.shape() != gt.shape())
    throw ShapeError("composite_output: " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  require_binary_mask(mask_paper, "composite_output");
  const Tensor m = repeat_channels(mask_paper, gt.dim(1));
  return gt * one_minus(m) + pred * m;
}

MaskedLayer::MaskedLayer(ParameterSet& params, const std::string& name, const ConvSpec& spec, ConvKind kind,
                         SConvNorm norm, Rng& rng)
    : conv_(params, name, spec, rng), kind_(kind), norm_(norm) {}

MaskedFeature MaskedLayer::forward(const MaskedFeature& x, ForwardMode mode) {
  if (kind_ == ConvKind::C) return {conv_.forward(x.feature, mode), forward_mask(x.mask)};
  const Tensor w = conv_.effective_weight(mode);
  return conv_.spec().transpose ? sconv_transpose(x, w, conv_.bias(), conv_.options(), norm_)
                                : sconv(x, w, conv_.bias(), conv_.options(), norm_);
}

Tensor MaskedLayer::forward_mask(const Tensor& mask) const {
  const std::size_t k = conv_.spec().kernel;
  return conv_.spec().transpose ? mask_update_transpose(mask, k, k, conv_.options())
                                : mask_update(mask, k, k, conv_.options());
}

CompletionGenerator::CompletionGenerator(const CompletionNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  const NetworkSpec& spec = cfg.spec;
  if (spec.segments.size() < 2 || spec.down().count != spec.up().count)
    throw std::invalid_argument("completion generator: malformed structure " + to_string(spec));
  Rng rng(seed);
  const std::size_t depth = spec.depth(), w = cfg.width;
  // enc[k] = channels of encoder output k; enc[0] is the image + edge input.
  std::vector<std::size_t> enc{4};
  for (std::size_t k = 1; k <= depth; ++k) enc.push_back(w << std::min<std::size_t>(k - 1, 3));

  for (std::size_t k = 1; k <= depth; ++k) {
    const std::string name = "down" + std::to_string(k);
    down_.emplace_back(params_, name,
                       ConvSpec{.in_channels = enc[k - 1], .out_channels = enc[k], .kernel = 4, .stride = 2, .padding = 1},
                       spec.down().kind, cfg.sconv_norm, rng);
    down_norm_.emplace_back(params_, name + ".bn", NormKind::batch, enc[k]);
  }
  const std::size_t c = enc[depth];
  for (std::size_t i = 0; i < spec.residual_count(); ++i) {
    const std::string name = "res" + std::to_string(i);
    const ConvSpec cs{.in_channels = c, .out_channels = c, .kernel = 3, .padding = 1, .spectral = cfg.residual_spectral};
    ResBlock b;
    b.conv1 = MaskedLayer(params_, name + ".conv1", cs, spec.residual_kind(), cfg.sconv_norm, rng);
    b.norm1 = Norm(params_, name + ".bn1", NormKind::batch, c);
    b.conv2 = MaskedLayer(params_, name + ".conv2", cs, spec.residual_kind(), cfg.sconv_norm, rng);
    b.norm2 = Norm(params_, name + ".bn2", NormKind::batch, c);
    res_.push_back(std::move(b));
  }
  std::size_t in = c;
  for (std::size_t j = 1; j <= depth; ++j) {
    const std::string name = "up" + std::to_string(j);
    const std::size_t level = depth - j;  // resolution of encoder output `level`
    const std::size_t out = level >= 1 ? enc[level] : w;
    up_.emplace_back(params_, name,
                     ConvSpec{.in_channels = in, .out_channels = out, .kernel = 4, .stride = 2, .padding = 1, .transpose = true},
                     spec.up().kind, cfg.sconv_norm, rng);
    up_norm_.emplace_back(params_, name + ".bn", NormKind::batch, out);
    in = out + (cfg.skip_links ? enc[level] : 0);
  }
  head_ = MaskedLayer(params_, "head", ConvSpec{.in_channels = in, .out_channels = 3, .kernel = 3, .padding = 1},
                      spec.up().kind, cfg.sconv_norm, rng);
}

void CompletionGenerator::check_input_size(std::size_t h, std::size_t w) const {
  const std::size_t unit = std::size_t{1} << cfg_.spec.depth();
  if (h % unit || w % unit || h == 0 || w == 0)
    throw ShapeError("structure " + to_string(cfg_.spec) + " requires height and width divisible by " +
                     std::to_string(unit) + ", got " + std::to_string(h) + "x" + std::to_string(w));
}

MaskedFeature CompletionGenerator::join(const MaskedFeature& decoder, const MaskedFeature& encoder) const {
  if (cfg_.spec.up().kind == ConvKind::C) return skip_concat(decoder, encoder);
  // Each part is cut to its own valid region first; the union mask alone
  // would let hole pixels of one part through wherever the other is valid.
  return skip_concat({apply_mask(decoder.feature, decoder.mask), decoder.mask},
                     {apply_mask(encoder.feature, encoder.mask), encoder.mask});
}

Tensor CompletionGenerator::forward(const Tensor& damaged, const Tensor& c_comp, const Tensor& validity_mask,
                                    ForwardMode mode, std::vector<Tensor>* trace) {
  if (damaged.ndim() != 4 || damaged.dim(1) != 3)
    throw ShapeError("completion generator expects a [N,3,H,W] image, got " + shape_str(damaged.shape()));
  require_binary_mask(validity_mask, "completion generator");
  if (c_comp.shape() != validity_mask.shape() || validity_mask.dim(0) != damaged.dim(0) ||
      validity_mask.dim(2) != damaged.dim(2) || validity_mask.dim(3) != damaged.dim(3))
    throw ShapeError("completion generator: image " + shape_str(damaged.shape()) + ", edges " +
                     shape_str(c_comp.shape()) + " and mask " + shape_str(validity_mask.shape()) + " do not align");
  check_input_size(damaged.dim(2), damaged.dim(3));
  auto record = [&](const Tensor& m) {
    if (trace) trace->push_back(m);
  };

  std::vector<MaskedFeature> enc{{concat({damaged, c_comp}, 1), validity_mask}};
  MaskedFeature x = enc[0];
  for (std::size_t k = 0; k < down_.size(); ++k) {
    x = down_[k].forward(x, mode);
    x.feature = relu(down_norm_[k].forward(x.feature, mode));
    record(x.mask);
    enc.push_back(x);
  }
  for (auto& b : res_) {
    MaskedFeature h = b.conv1.forward(x, mode);
    h.feature = relu(b.norm1.forward(h.feature, mode));
    record(h.mask);
    h = b.conv2.forward(h, mode);
    h.feature = b.norm2.forward(h.feature, mode);
    record(h.mask);
    const Tensor base = b.conv1.kind() == ConvKind::CM ? apply_mask(x.feature, x.mask) : x.feature;
    x = {base + h.feature, h.mask};
  }
  const std::size_t depth = up_.size();
  for (std::size_t j = 1; j <= depth; ++j) {
    x = up_[j - 1].forward(x, mode);
    x.feature = leaky_relu(up_norm_[j - 1].forward(x.feature, mode), kLeakySlope);
    record(x.mask);
    if (cfg_.skip_links) {
      x = join(x, enc[depth - j]);
      record(x.mask);
    }
  }
  const MaskedFeature out = head_.forward(x, mode);
  record(out.mask);
  return tanh(out.feature);
}

std::vector<Tensor> CompletionGenerator::mask_trace(const Tensor& validity_mask) const {
  require_binary_mask(validity_mask, "mask trace");
  check_input_size(validity_mask.dim(2), validity_mask.dim(3));
  NoGradScope no_grad;
  std::vector<Tensor> trace, enc{validity_mask};
  Tensor m = validity_mask;
  for (const auto& layer : down_) {
    m = layer.forward_mask(m);
    trace.push_back(m);
    enc.push_back(m);
  }
  for (const auto& b : res_) {
    m = b.conv1.forward_mask(m);
    trace.push_back(m);
    m = b.conv2.forward_mask(m);
    trace.push_back(m);
  }
  const std::size_t depth = up_.size();
  for (std::size_t j = 1; j <= depth; ++j) {
    m = up_[j - 1].forward_mask(m);
    trace.push_back(m);
    if (cfg_.skip_links) {
      m = mask_union(m, enc[depth - j]);
      trace.push_back(m);
    }
  }
  trace.push_back(head_.forward_mask(m));
  return trace;
}

Tensor g2_forward(CompletionGenerator& g2, const ComposedInputs& in, ForwardMode mode) {
  return g2.forward(in.damaged, in.c_comp, in.validity_mask, mode);
}

double hole_l1(const Tensor& pred, const Tensor& gt, const Tensor& mask_paper) {
  if (pred.shape() != gt.shape()) throw ShapeError("hole_l1: " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  const std::size_t n = pred.dim(0), c = pred.dim(1), hw = pred.dim(2) * pred.dim(3);
  if (mask_paper.numel() != n * hw) throw ShapeError("hole_l1: mask " + shape_str(mask_paper.shape()) + " misaligned");
  const auto p = pred.data(), g = gt.data(), m = mask_paper.data();
  double total = 0.0, count = 0.0;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < hw; ++i) {
      if (m[s * hw + i] == 0.0) continue;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t at = (s * c + ch) * hw + i;
        total += std::abs(p[at] - g[at]);
        count += 1.0;
      }
    }
  return count == 0.0 ? 0.0 : total / count / 2.0;
}

CompletionTrainer::CompletionTrainer(const CompletionNetConfig& net, const CompletionTrainConfig& train,
                                     std::uint64_t seed)
    : cfg_(train),
      g_(std::make_unique<CompletionGenerator>(net, seed)),
      d_(std::make_unique<PatchDiscriminator>(4, train.d_width, train.d_spectral, seed + 1)),
      fx_(FeatureExtractor::standard(train.extractor_seed)),
      opt_g_(std::make_unique<Adam>(g_->params().trainable(), train.adam)),
      opt_d_(std::make_unique<Adam>(d_->params().trainable(), discriminator_adam(train.adam, train.d_lr_ratio))),
      monitor_(train.divergence_steps, train.divergence_threshold) {
  validate(train.weights);
}

CompletionStepStats CompletionTrainer::step(const Batch& batch, const Tensor& c_comp_in) {
  CompletionStepStats stats;
  const Tensor c_comp = c_comp_in.detach();
  const Tensor validity = one_minus(batch.mask_paper);
  const Tensor damaged = batch.image * repeat_channels(validity, 3);
  Tape tape_g, tape_d;
  Tensor pred;
  {
    TapeScope scope(tape_g);
    pred = g_->forward(damaged, c_comp, validity, kTrain);
  }
  const Tensor real_in = concat({batch.image, c_comp}, 1);
  {
    TapeScope scope(tape_d);
    const Tensor loss = discriminator_loss(d_->forward(real_in, kTrain),
                                           d_->forward(concat({pred.detach(), c_comp}, 1), kTrain));
    stats.d_loss = loss.item();
    opt_d_->zero_grad();
    tape_d.backward(loss);
    opt_d_->step();
  }
  tape_d.clear();
  {
    TapeScope scope(tape_g);
    LossTerms terms;
    terms.l1 = l1_loss(pred, batch.image);
    terms.adv = generator_adversarial_loss(d_->forward(concat({pred, c_comp}, 1), kFrozenTrain));
    terms.perceptual = perceptual_loss(pred, batch.image, fx_);
    const Tensor styled = cfg_.style_on_composite ? composite_output(pred, batch.image, batch.mask_paper) : pred;
    terms.style = style_loss(styled, batch.image, fx_);
    const Tensor total = total_g2_loss(terms, cfg_.weights);
    stats.l1 = terms.l1.item();
    stats.adv = terms.adv.item();
    stats.perceptual = terms.perceptual.item();
    stats.style = terms.style.item();
    stats.total = total.item();
    opt_g_->zero_grad();
    tape_g.backward(total);
    opt_g_->step();
  }
  tape_g.clear();
  opt_d_->zero_grad();
  stats.hole_l1 = hole_l1(pred, batch.image, batch.mask_paper);
  monitor_.observe(stats.d_loss, steps_taken(), "completion model");
  return stats;
}

void CompletionTrainer::store(Checkpoint& ckpt) const {
  store_parameters(ckpt, g_->params(), "g2.");
  store_parameters(ckpt, d_->params(), "d2.");
  store_optimizer(ckpt, *opt_g_, "g2.adam.");
  store_optimizer(ckpt, *opt_d_, "d2.adam.");
}

void CompletionTrainer::restore(const Checkpoint& ckpt) {
  restore_parameters(ckpt, g_->params(), "g2.");
  restore_parameters(ckpt, d_->params(), "d2.");
  restore_optimizer(ckpt, *opt_g_, "g2.adam.");
  restore_optimizer(ckpt, *opt_d_, "d2.adam.");
}

}  // namespace inpaint

#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "inpaint/completion.hpp"
#include "inpaint/edge_model.hpp"
#include "inpaint/error.hpp"
#include "inpaint/metrics.hpp"

using namespace inpaint;
using inpaint::testing::gradcheck;

namespace {

const std::vector<std::string> kTableStructures = {
    "5(C)-4(C)-5(C)",     "6(C)-2(C)-6(C)",     "4(C)-6(C)-4(C)",     "7(C)-0(C)-7(C)",
    "5(CM)-4(C)-5(CM)",   "6(CM)-2(C)-6(CM)",   "4(CM)-6(C)-4(CM)",   "7(CM)-7(CM)",
    "5(CM)-4(CM)-5(CM)",  "6(CM)-2(CM)-6(CM)",  "4(CM)-6(CM)-4(CM)",
};

Tensor random_hole(std::size_t n, std::size_t h, std::size_t w, Rng& rng) {
  Tensor m = Tensor::zeros({n, 1, h, w});
  auto d = m.mutable_data();
  for (std::size_t s = 0; s < n; ++s) {
    const int y0 = rng.uniform_int(0, static_cast<int>(h) / 2), x0 = rng.uniform_int(0, static_cast<int>(w) / 2);
    const int hh = rng.uniform_int(2, static_cast<int>(h) / 2), ww = rng.uniform_int(2, static_cast<int>(w) / 2);
    for (int y = y0; y < y0 + hh; ++y)
      for (int x = x0; x < x0 + ww; ++x) d[(s * h + y) * w + x] = 1.0;
  }
  return m;
}

Tensor one_minus(const Tensor& m) {
  std::vector<double> v(m.data().begin(), m.data().end());
  for (double& e : v) e = 1.0 - e;
  return Tensor(m.shape(), v);
}

Batch toy_batch(std::size_t n, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  Batch b;
  b.image = Tensor::uniform({n, 3, size, size}, rng, -1.0, 1.0);
  b.gray = Tensor::uniform({n, 1, size, size}, rng, 0.0, 1.0);
  b.edges = Tensor::zeros({n, 1, size, size});
  for (double& e : b.edges.mutable_data()) e = rng.uniform() < 0.1 ? 1.0 : 0.0;
  b.mask_paper = random_hole(n, size, size, rng);
  return b;
}

CompletionNetConfig small_g2(const std::string& structure, std::size_t width = 4) {
  CompletionNetConfig c;
  c.spec = parse_structure(structure);
  c.width = width;
  return c;
}

// Brute-force valid-set dilation for one layer geometry.
std::vector<int> dilate(const std::vector<int>& in, int h, int w, int k, int s, int p, bool transpose, int& oh,
                        int& ow) {
  if (!transpose) {
    oh = (h + 2 * p - k) / s + 1;
    ow = (w + 2 * p - k) / s + 1;
  } else {
    oh = (h - 1) * s - 2 * p + k;
    ow = (w - 1) * s - 2 * p + k;
  }
  std::vector<int> out(oh * ow, 0);
  if (!transpose) {
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) {
            const int iy = y * s - p + i, ix = x * s - p + j;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w && in[iy * w + ix]) out[y * ow + x] = 1;
          }
  } else {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!in[y * w + x]) continue;
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) {
            const int oy = y * s - p + i, ox = x * s - p + j;
            if (oy >= 0 && oy < oh && ox >= 0 && ox < ow) out[oy * ow + ox] = 1;
          }
      }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- grammar

TEST(Structure, TableStringsRoundTrip) {
  for (const auto& s : kTableStructures) {
    const NetworkSpec spec = parse_structure(s);
    EXPECT_EQ(to_string(spec), s);
    EXPECT_EQ(spec.down().count, spec.up().count);
  }
}

TEST(Structure, ParsedFields) {
  const NetworkSpec best = parse_structure("4(CM)-6(CM)-4(CM)");
  EXPECT_EQ(best.depth(), 4u);
  EXPECT_EQ(best.residual_count(), 6u);
  EXPECT_EQ(best.residual_kind(), ConvKind::CM);
  EXPECT_EQ(best.segments[1].stage, Stage::residual);
  const NetworkSpec base = parse_structure("7(C)-0(C)-7(C)");
  EXPECT_EQ(base.depth(), 7u);
  EXPECT_EQ(base.residual_count(), 0u);
  EXPECT_EQ(base.down().kind, ConvKind::C);
  const NetworkSpec two = parse_structure("7(CM)-7(CM)");
  EXPECT_EQ(two.segments.size(), 2u);
  EXPECT_EQ(two.residual_count(), 0u);
  EXPECT_EQ(two.up().stage, Stage::up);
}

TEST(Structure, ErrorsCarryPositions) {
  const std::vector<std::pair<std::string, std::size_t>> cases = {
      {"4(CX)-6(CM)-4(CM)", 2}, {"4(CM)--6(CM)-4(CM)", 6}, {"4(CM)-6(CM)-5(CM)", 12},
      {"4(CM)", 5},             {"4(CM)-6(CM)-4(CM)-1(C)", 18}, {"", 0},
      {"4CM", 1},               {"-4(CM)-4(CM)", 0},      {"4(CM)-6(CM", 10},
      {"4(cm)-4(cm)", 2},       {"4(CM)-4(CM) ", 11},     {"x(C)-1(C)", 0},
  };
  for (const auto& [text, pos] : cases) {
    try {
      parse_structure(text);
      ADD_FAILURE() << "accepted '" << text << "'";
    } catch (const ParseError& e) {
      EXPECT_EQ(e.position(), pos) << text << ": " << e.what();
    }
  }
  try {
    parse_structure("4(CM)-6(CM)-5(CM)");
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("segment 3"), std::string::npos);
  }
}

// ------------------------------------------------------------ composition

TEST(Composition, ZeroAndFullMasks) {
  Rng rng(1);
  const Tensor img = Tensor::uniform({1, 3, 4, 4}, rng, -1, 1);
  const Tensor cgt = Tensor::uniform({1, 1, 4, 4}, rng, 0, 1), cpred = Tensor::uniform({1, 1, 4, 4}, rng, 0, 1);
  const auto none = compose_inputs({img, Tensor::zeros({1, 1, 4, 4}), cgt, cpred});
  for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_EQ(none.damaged[i], img[i]);
  for (std::size_t i = 0; i < cgt.numel(); ++i) EXPECT_EQ(none.c_comp[i], cgt[i]);
  const auto all = compose_inputs({img, Tensor::ones({1, 1, 4, 4}), cgt, cpred});
  for (double v : all.damaged.data()) EXPECT_EQ(v, 0.0);
  for (std::size_t i = 0; i < cpred.numel(); ++i) EXPECT_EQ(all.c_comp[i], cpred[i]);
  for (double v : all.validity_mask.data()) EXPECT_EQ(v, 0.0);
}

TEST(Composition, CheckerSelectsPerPixel) {
  Rng rng(2);
  const Tensor img = Tensor::uniform({1, 3, 6, 6}, rng, -1, 1);
  const Tensor cgt = Tensor::uniform({1, 1, 6, 6}, rng, 0, 1), cpred = Tensor::uniform({1, 1, 6, 6}, rng, 0, 1);
  const Tensor pred = Tensor::uniform({1, 3, 6, 6}, rng, -1, 1);
  Tensor m = Tensor::zeros({1, 1, 6, 6});
  for (std::size_t i = 0; i < 36; ++i) m.mutable_data()[i] = ((i / 6 + i % 6) % 2) ? 1.0 : 0.0;
  const auto c = compose_inputs({img, m, cgt, cpred});
  const Tensor comp = composite_output(pred, img, m);
  for (std::size_t i = 0; i < 36; ++i) {
    const bool hole = m[i] == 1.0;
    EXPECT_EQ(c.c_comp[i], hole ? cpred[i] : cgt[i]);
    EXPECT_EQ(c.validity_mask[i], hole ? 0.0 : 1.0);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      EXPECT_EQ(c.damaged[ch * 36 + i], hole ? 0.0 : img[ch * 36 + i]);
      EXPECT_EQ(comp[ch * 36 + i], hole ? pred[ch * 36 + i] : img[ch * 36 + i]);
    }
  }
}

TEST(Composition, CompositingNeverLowersPsnr) {
  Rng rng(3);
  for (int t = 0; t < 5; ++t) {
    const Tensor gt = Tensor::uniform({1, 3, 8, 8}, rng, -1, 1), pred = Tensor::uniform({1, 3, 8, 8}, rng, -1, 1);
    const Tensor m = random_hole(1, 8, 8, rng);
    EXPECT_GE(psnr(composite_output(pred, gt, m), gt, 2.0), psnr(pred, gt, 2.0));
  }
  EXPECT_THROW(compose_inputs({Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({1, 1, 5, 4}), Tensor::zeros({1, 1, 5, 4}),
                               Tensor::zeros({1, 1, 5, 4})}),
               ShapeError);
}

TEST(Composition, HoleL1) {
  Tensor pred = Tensor::zeros({1, 3, 2, 2}), gt = Tensor::zeros({1, 3, 2, 2});
  Tensor m = Tensor::zeros({1, 1, 2, 2});
  m.mutable_data()[0] = 1.0;
  pred.mutable_data()[0] = 1.0;  // channel 0, hole pixel
  pred.mutable_data()[1] = 2.0;  // channel 0, valid pixel: ignored
  EXPECT_DOUBLE_EQ(hole_l1(pred, gt, m), 1.0 / 3.0 / 2.0);
  EXPECT_EQ(hole_l1(pred, gt, Tensor::zeros({1, 1, 2, 2})), 0.0);
}

// --------------------------------------------------------------------- G2

TEST(CompletionGenerator, ShapeRangeAndSkips) {
  CompletionGenerator g(small_g2(kDefaultStructure), 7);
  EXPECT_EQ(g.skip_link_count(), 4u);
  Rng rng(4);
  const Batch b = toy_batch(2, 32, 5);
  const Tensor out = g.forward(b.image, b.edges, one_minus(b.mask_paper), kTrain);
  EXPECT_EQ(out.shape(), b.image.shape());
  for (double v : out.data()) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_LE(std::abs(v), 1.0);
  }
  CompletionNetConfig no_skip = small_g2(kDefaultStructure);
  no_skip.skip_links = false;
  EXPECT_EQ(CompletionGenerator(no_skip, 7).skip_link_count(), 0u);
  EXPECT_EQ(CompletionGenerator(no_skip, 7).forward(b.image, b.edges, one_minus(b.mask_paper), kTrain).shape(),
            b.image.shape());
}

TEST(CompletionGenerator, RejectsIndivisibleSize) {
  CompletionGenerator g(small_g2(kDefaultStructure), 7);
  try {
    g.forward(Tensor::zeros({1, 3, 40, 40}), Tensor::zeros({1, 1, 40, 40}), Tensor::ones({1, 1, 40, 40}), kEval);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("divisible by 16"), std::string::npos);
  }
  EXPECT_THROW(g.forward(Tensor::zeros({1, 3, 32, 32}), Tensor::zeros({1, 1, 16, 16}), Tensor::ones({1, 1, 32, 32}), kEval),
               ShapeError);
}

TEST(CompletionGenerator, AllOnesMaskMakesCmEqualC) {
  for (const auto& [cm, c] : {std::pair{"4(CM)-6(CM)-4(CM)", "4(C)-6(C)-4(C)"}, std::pair{"2(CM)-1(C)-2(CM)", "2(C)-1(C)-2(C)"}}) {
    CompletionGenerator gcm(small_g2(cm), 11), gc(small_g2(c), 11);
    const Batch b = toy_batch(2, 32, 6);
    const Tensor ones = Tensor::ones({2, 1, 32, 32});
    const Tensor a = gcm.forward(b.image, b.edges, ones, kFrozenTrain);
    const Tensor z = gc.forward(b.image, b.edges, ones, kFrozenTrain);
    for (std::size_t i = 0; i < a.numel(); ++i) ASSERT_NEAR(a[i], z[i], 1e-10) << cm;
  }
}

TEST(CompletionGenerator, HolePixelsNeverReachTheOutput) {
  CompletionGenerator g(small_g2(kDefaultStructure), 12);
  Rng rng(13);
  const Batch b = toy_batch(2, 32, 14);
  const Tensor validity = one_minus(b.mask_paper);
  const Tensor base = g.forward(b.image, b.edges, validity, kFrozenTrain);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor img = b.image.detach(), edges = b.edges.detach();
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t i = 0; i < 32 * 32; ++i) {
        if (b.mask_paper[s * 1024 + i] == 0.0) continue;
        for (std::size_t c = 0; c < 3; ++c) img.mutable_data()[(s * 3 + c) * 1024 + i] = rng.uniform(-50, 50);
        edges.mutable_data()[s * 1024 + i] = rng.uniform(-5, 5);
      }
    const Tensor out = g.forward(img, edges, validity, kFrozenTrain);
    for (std::size_t i = 0; i < out.numel(); ++i) ASSERT_EQ(out[i], base[i]);
  }
  // The same perturbation does reach the output of a plain-convolution net.
  CompletionGenerator gc(small_g2("4(C)-6(C)-4(C)"), 12);
  Tensor img = b.image.detach();
  for (std::size_t i = 0; i < 1024; ++i)
    if (b.mask_paper[i] == 1.0) img.mutable_data()[i] += 1.0;
  const Tensor a = gc.forward(b.image, b.edges, validity, kFrozenTrain), z = gc.forward(img, b.edges, validity, kFrozenTrain);
  bool changed = false;
  for (std::size_t i = 0; i < a.numel(); ++i) changed |= a[i] != z[i];
  EXPECT_TRUE(changed);
}

TEST(CompletionGenerator, MaskTraceMatchesForwardAndOracle) {
  CompletionGenerator g(small_g2(kDefaultStructure), 15);
  Rng rng(16);
  const Batch b = toy_batch(1, 32, 17);
  const Tensor validity = one_minus(b.mask_paper);
  std::vector<Tensor> fwd;
  g.forward(b.image, b.edges, validity, kFrozenTrain, &fwd);
  const auto sym = g.mask_trace(validity);
  ASSERT_EQ(fwd.size(), sym.size());
  for (std::size_t l = 0; l < sym.size(); ++l)
    for (std::size_t i = 0; i < sym[l].numel(); ++i) ASSERT_EQ(fwd[l][i], sym[l][i]) << "layer " << l;

  // Oracle: explicit dilation per layer geometry.
  std::vector<int> m(validity.data().begin(), validity.data().end());
  int h = 32, w = 32, oh, ow;
  std::vector<std::vector<int>> enc{m};
  std::vector<std::pair<int, int>> dims{{h, w}};
  std::vector<std::vector<int>> want;
  for (int k = 0; k < 4; ++k) {
    m = dilate(m, h, w, 4, 2, 1, false, oh, ow);
    h = oh, w = ow;
    want.push_back(m);
    enc.push_back(m);
    dims.push_back({h, w});
  }
  for (int r = 0; r < 12; ++r) {
    m = dilate(m, h, w, 3, 1, 1, false, oh, ow);
    want.push_back(m);
  }
  for (int j = 1; j <= 4; ++j) {
    m = dilate(m, h, w, 4, 2, 1, true, oh, ow);
    h = oh, w = ow;
    want.push_back(m);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::max(m[i], enc[4 - j][i]);
    want.push_back(m);
  }
  want.push_back(dilate(m, h, w, 3, 1, 1, false, oh, ow));
  ASSERT_EQ(want.size(), sym.size());
  for (std::size_t l = 0; l < sym.size(); ++l)
    for (std::size_t i = 0; i < sym[l].numel(); ++i) ASSERT_EQ(sym[l][i], want[l][i]) << "layer " << l;
}

TEST(CompletionGenerator, HolesCloseBeforeTheLastDecoderLayer) {
  CompletionGenerator g(small_g2(kDefaultStructure), 18);
  Rng rng(19);
  for (int t = 0; t < 10; ++t) {
    // One valid pixel is enough: everything else is a hole.
    Tensor validity = Tensor::zeros({1, 1, 64, 64});
    validity.mutable_data()[rng.uniform_int(0, 64 * 64 - 1)] = 1.0;
    const auto trace = g.mask_trace(validity);
    const Tensor& before_last = trace[trace.size() - 4];  // join after the third decoder stage
    for (double v : before_last.data()) ASSERT_EQ(v, 1.0);
  }
}

TEST(CompletionGenerator, LossGradientsMatchFiniteDifferences) {
  CompletionNetConfig nc = small_g2("1(CM)-1(CM)-1(CM)", 2);
  CompletionGenerator g(nc, 20);
  PatchDiscriminator d(4, 1, true, 21);
  const FeatureExtractor fx({3, 2, 2}, 22);
  const Batch b = toy_batch(1, 32, 23);
  const Tensor validity = one_minus(b.mask_paper);
  const Tensor damaged = b.image * repeat_channels(validity, 3);
  auto loss = [&](int term) {
    return [&, term] {
      const Tensor pred = g.forward(damaged, b.edges, validity, kFrozenTrain);
      LossTerms t;
      t.l1 = l1_loss(pred, b.image);
      t.adv = generator_adversarial_loss(d.forward(concat({pred, b.edges}, 1), kFrozenTrain));
      t.perceptual = perceptual_loss(pred, b.image, fx);
      t.style = style_loss(composite_output(pred, b.image, b.mask_paper), b.image, fx);
      switch (term) {
        case 0: return t.l1;
        case 1: return t.adv;
        case 2: return t.perceptual;
        case 3: return t.style;
        default: return total_g2_loss(t, {});
      }
    };
  };
  // Biases feeding batch norm have an exactly zero gradient; a relative error
  // on them only measures finite-difference noise.
  std::vector<Tensor> params;
  for (const auto& e : g.params().entries())
    if (e.trainable && (e.name == "head.bias" || !e.name.ends_with(".bias"))) params.push_back(e.tensor);
  for (int term = 0; term < 5; ++term) {
    const auto r = gradcheck(loss(term), params, 1e-6);
    EXPECT_LT(r.max_rel_error, 1e-3) << "term " << term;
    EXPECT_GT(r.analytic_norm, 0.0) << "term " << term;
  }
}

TEST(CompletionTrainer, FirstStepIsFiniteAndNonnegative) {
  CompletionTrainer tr(small_g2("2(CM)-1(CM)-2(CM)"), {.d_width = 2}, 24);
  const Batch b = toy_batch(2, 32, 25);
  const auto s = tr.step(b, b.edges);
  for (double v : {s.d_loss, s.l1, s.adv, s.perceptual, s.style, s.total, s.hole_l1}) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
  }
  EXPECT_NEAR(s.total, s.l1 + 0.1 * s.adv + 0.1 * s.perceptual + 250 * s.style, 1e-9);
}

TEST(CompletionTrainer, ResumeGivesIdenticalNextStep) {
  const auto net = small_g2("2(CM)-1(CM)-2(CM)");
  const CompletionTrainConfig tc{.d_width = 2};
  const Batch b = toy_batch(1, 32, 26);
  CompletionTrainer a(net, tc, 27);
  for (int i = 0; i < 3; ++i) a.step(b, b.edges);
  Checkpoint ck;
  a.store(ck);
  const auto next = a.step(b, b.edges);
  CompletionTrainer r(net, tc, 99);
  r.restore(ck);
  const auto again = r.step(b, b.edges);
  EXPECT_EQ(next.total, again.total);
  EXPECT_EQ(next.d_loss, again.d_loss);
  EXPECT_EQ(r.steps_taken(), 4);
}

// --------------------------------------------------------------------- G1

TEST(EdgeGenerator, ShapeAndRange) {
  EdgeGenerator g({.width = 4, .residual_blocks = 2}, 30);
  Rng rng(31);
  for (auto [h, w] : {std::pair{16, 16}, std::pair{32, 48}}) {
    const Tensor gray = Tensor::uniform({1, 1, std::size_t(h), std::size_t(w)}, rng, 0, 1);
    const Tensor out = g1_forward(g, gray, Tensor::zeros(gray.shape()), Tensor::ones(gray.shape()), kTrain);
    EXPECT_EQ(out.shape(), gray.shape());
    for (double v : out.data()) {
      ASSERT_GT(v, 0.0);
      ASSERT_LT(v, 1.0);
    }
  }
  EXPECT_THROW(g1_forward(g, Tensor::zeros({1, 1, 18, 16}), Tensor::zeros({1, 1, 18, 16}), Tensor::zeros({1, 1, 18, 16}), kEval),
               ShapeError);
  EXPECT_THROW(g1_forward(g, Tensor::zeros({1, 1, 16, 16}), Tensor::zeros({1, 1, 8, 16}), Tensor::zeros({1, 1, 16, 16}), kEval),
               ShapeError);
}

TEST(EdgeGenerator, ParameterCountFollowsSchedule) {
  for (std::size_t w : {4u, 32u}) {
    EdgeGenerator g({.width = w, .residual_blocks = 8}, 1);
    const std::size_t c4 = 4 * w;
    std::size_t want = 49 * 3 * w + w + 16 * w * 2 * w + 2 * w + 16 * 2 * w * c4 + c4;  // stem, down1, down2
    want += 8 * (2 * (9 * c4 * c4 + c4) + 4 * c4);                                       // residual blocks + norms
    want += 16 * c4 * 2 * w + 2 * w + 16 * 2 * w * w + w + 49 * w + 1;                    // up1, up2, head
    want += 2 * (w + 2 * w + c4 + 2 * w + w);                                             // norms
    std::size_t got = 0;
    for (const auto& t : g.params().trainable()) got += t.numel();
    EXPECT_EQ(got, want);
  }
}

TEST(EdgeDiscriminator, SeparatesConstants) {
  PatchDiscriminator d(2, 4, true, 40);
  Adam opt(d.params().trainable(), {});
  const Tensor real = Tensor::ones({2, 2, 32, 32}), fake = Tensor::zeros({2, 2, 32, 32});
  double accuracy = 0.0;
  for (int step = 0; step < 200 && accuracy <= 0.95; ++step) {
    Tape tape;
    TapeScope scope(tape);
    const Tensor lr = d.forward(real, kTrain), lf = d.forward(fake, kTrain);
    std::size_t right = 0;
    for (double v : lr.data()) right += v > 0;
    for (double v : lf.data()) right += v < 0;
    accuracy = static_cast<double>(right) / (lr.numel() + lf.numel());
    tape.backward(discriminator_loss(lr, lf));
    opt.step();
    tape.clear();
  }
  EXPECT_GT(accuracy, 0.95);
}

TEST(EdgeTrainer, GradientsFiniteAndResumable) {
  const EdgeNetConfig net{.width = 4, .residual_blocks = 2};
  const EdgeTrainConfig tc{.d_width = 2};
  EdgeTrainer tr(net, tc, 41);
  // Non-degenerate generator gradient before any update.
  {
    const Batch b = toy_batch(1, 32, 42);
    Tape tape;
    TapeScope scope(tape);
    const Tensor pred = predict_edges(tr.generator(), b, kFrozenTrain);
    tape.backward(l1_loss(pred, b.edges));
    double norm = 0.0;
    for (const auto& p : tr.generator().params().trainable())
      if (p.has_grad())
        for (double g : p.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0);
    tape.clear();
  }
  for (int i = 0; i < 100; ++i) {
    const auto s = tr.step(toy_batch(1, 32, 100 + i));
    ASSERT_TRUE(std::isfinite(s.d_loss) && std::isfinite(s.g_total) && std::isfinite(s.l1)) << i;
  }
  for (const auto& e : tr.generator().params().entries())
    for (double v : e.tensor.data()) ASSERT_TRUE(std::isfinite(v)) << e.name;
  Checkpoint ck;
  tr.store(ck);
  const Batch b = toy_batch(1, 32, 43);
  const auto next = tr.step(b);
  EdgeTrainer r(net, tc, 7);
  r.restore(ck);
  const auto again = r.step(b);
  EXPECT_EQ(next.g_total, again.g_total);
  EXPECT_EQ(next.d_loss, again.d_loss);
}

TEST(Divergence, MonitorNeedsConsecutiveSteps) {
  DivergenceMonitor m(100, 1e-4);
  for (int i = 0; i < 99; ++i) m.observe(1e-6, i, "x");
  m.observe(0.5, 99, "x");
  EXPECT_EQ(m.run_length(), 0u);
  for (int i = 0; i < 99; ++i) m.observe(1e-6, i, "x");
  try {
    m.observe(1e-6, 500, "edge model");
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("step 500"), std::string::npos);
  }
}

TEST(Batching, ScheduleIsDeterministicAndCoversEpochs) {
  const auto a = batch_indices(10, 4, 3, 5), b = batch_indices(10, 4, 3, 5);
  EXPECT_EQ(a, b);
  std::vector<int> seen(10, 0);
  for (int step = 0; step < 5; ++step)
    for (auto i : batch_indices(10, 2, step, 5)) ++seen[i];
  for (int c : seen) EXPECT_EQ(c, 1);
}

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "gradcheck.hpp"
#include "inpaint/checkpoint.hpp"
#include "inpaint/error.hpp"
#include "inpaint/layers.hpp"
#include "inpaint/log.hpp"

using namespace inpaint;
using inpaint::testing::gradcheck;

namespace {

Eigen::MatrixXd as_matrix(const Tensor& w) {
  const std::size_t rows = w.dim(0), cols = w.numel() / rows;
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = w[r * cols + c];
  return m;
}

double largest_singular_value(const Tensor& w) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(as_matrix(w));
  return svd.singularValues()(0);
}

}  // namespace

TEST(BatchNorm, ConstantChannelNormalizesToZero) {
  Tensor x = Tensor::full({2, 1, 3, 3}, 4.0);
  Tensor rm = Tensor::zeros({1}), rv = Tensor::ones({1});
  Tensor y = batch_norm(x, Tensor::ones({1}), Tensor::zeros({1}), rm, rv, kTrain);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
  Rng rng(1);
  Tensor x = Tensor::randn({2, 2, 3, 3}, rng);
  Tensor rm = Tensor::zeros({2}), rv = Tensor::ones({2});
  Tensor y = batch_norm(x, Tensor::zeros({2}), Tensor({2}, {0.5, -2.0}), rm, rv, kTrain);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], ((i / 9) % 2 == 0) ? 0.5 : -2.0);
}

TEST(BatchNorm, TwoValuesNormalizeToPlusMinusOne) {
  Tensor x({2, 1, 1, 1}, {-1.0, 1.0});
  Tensor rm = Tensor::zeros({1}), rv = Tensor::ones({1});
  Tensor y = batch_norm(x, Tensor::ones({1}), Tensor::zeros({1}), rm, rv, kTrain);
  EXPECT_NEAR(y[0], -1.0, 1e-5);
  EXPECT_NEAR(y[1], 1.0, 1e-5);
}

TEST(BatchNorm, TrainingOutputIsStandardized) {
  Rng rng(2);
  Tensor x = Tensor::randn({3, 4, 5, 5}, rng, 3.0);
  for (double& v : x.mutable_data()) v += 7.0;
  Tensor rm = Tensor::zeros({4}), rv = Tensor::ones({4});
  Tensor y = batch_norm(x, Tensor::ones({4}), Tensor::zeros({4}), rm, rv, kTrain);
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t k = 0; k < 25; ++k) m += y[(n * 4 + c) * 25 + k];
    m /= 75.0;
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t k = 0; k < 25; ++k) v += std::pow(y[(n * 4 + c) * 25 + k] - m, 2);
    v /= 75.0;
    EXPECT_LT(std::fabs(m), 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
}

TEST(BatchNorm, RunningStatsAndEvalMode) {
  Tensor x({2, 1, 1, 2}, {1.0, 3.0, 5.0, 7.0});  // mean 4, var 5
  Tensor rm = Tensor::zeros({1}), rv = Tensor::ones({1});
  batch_norm(x, Tensor::ones({1}), Tensor::zeros({1}), rm, rv, kTrain);
  EXPECT_NEAR(rm[0], 0.4, 1e-12);
  EXPECT_NEAR(rv[0], 0.9 + 0.5, 1e-9);
  batch_norm(x, Tensor::ones({1}), Tensor::zeros({1}), rm, rv, kFrozenTrain);
  EXPECT_NEAR(rm[0], 0.4, 1e-12);
  Tensor y = batch_norm(x, Tensor::ones({1}), Tensor::zeros({1}), rm, rv, kEval);
  EXPECT_NEAR(y[0], (1.0 - 0.4) / std::sqrt(1.4 + 1e-5), 1e-12);
}

TEST(InstanceNorm, SpatiallyConstantGivesZeroOrBeta) {
  Tensor x = Tensor::full({1, 2, 3, 3}, 2.5);
  Tensor y = instance_norm(x, Tensor::ones({2}), Tensor::zeros({2}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
  Tensor y5 = instance_norm(x, Tensor::ones({2}), Tensor::full({2}, 5.0));
  for (double v : y5.data()) EXPECT_EQ(v, 5.0);
}

TEST(InstanceNorm, SamplesNormalizeIndependently) {
  Rng rng(3);
  Tensor a = Tensor::randn({1, 1, 4, 4}, rng);
  std::vector<double> both(a.data().begin(), a.data().end());
  for (double v : a.data()) both.push_back(100.0 * v + 3.0);
  Tensor y = instance_norm(Tensor({2, 1, 4, 4}, both), Tensor::ones({1}), Tensor::zeros({1}));
  for (std::size_t n = 0; n < 2; ++n) {
    double m = 0.0, v = 0.0;
    for (std::size_t k = 0; k < 16; ++k) m += both[n * 16 + k] / 16.0;
    for (std::size_t k = 0; k < 16; ++k) v += std::pow(both[n * 16 + k] - m, 2) / 16.0;
    for (std::size_t k = 0; k < 16; ++k)
      EXPECT_NEAR(y[n * 16 + k], (both[n * 16 + k] - m) / std::sqrt(v + kNormEpsilon), 1e-9);
  }
  for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(y[k], y[16 + k], 1e-4);
}

TEST(Norms, GradientsMatchFiniteDifferences) {
  Rng rng(4);
  Tensor x = Tensor::randn({2, 3, 3, 4}, rng);
  Tensor g = Tensor::uniform({3}, rng, 0.5, 1.5), b = Tensor::randn({3}, rng);
  Tensor probe = Tensor::randn({2, 3, 3, 4}, rng);
  Tensor rm = Tensor::randn({3}, rng), rv = Tensor::uniform({3}, rng, 0.5, 2.0);
  EXPECT_LT(gradcheck([&] { return sum(batch_norm(x, g, b, rm, rv, kFrozenTrain) * probe); }, {x, g, b})
                .max_rel_error,
            1e-4);
  EXPECT_LT(gradcheck([&] { return sum(batch_norm(x, g, b, rm, rv, kEval) * probe); }, {x, g, b})
                .max_rel_error,
            1e-4);
  EXPECT_LT(gradcheck([&] { return sum(instance_norm(x, g, b) * probe); }, {x, g, b}).max_rel_error,
            1e-4);
}

TEST(SpectralNorm, DiagonalMatrix) {
  Rng rng(5);
  Tensor w({2, 2}, {3.0, 0.0, 0.0, 1.0});
  SpectralState st = make_spectral_state(w, rng);
  Tensor wn = spectral_normalize(w, st, 50);
  EXPECT_NEAR(largest_singular_value(wn), 1.0, 1e-3);
}

TEST(SpectralNorm, OrthogonalMatrixUnchanged) {
  Rng rng(6);
  const double t = 0.7;
  Tensor w({2, 2}, {std::cos(t), -std::sin(t), std::sin(t), std::cos(t)});
  SpectralState st = make_spectral_state(w, rng);
  Tensor wn = spectral_normalize(w, st, 20);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(wn[i], w[i], 1e-3);
}

TEST(SpectralNorm, ScaleInvariant) {
  Rng rng(7);
  Tensor w = Tensor::randn({4, 6}, rng);
  Tensor w3({4, 6}, std::vector<double>(w.data().begin(), w.data().end()));
  for (double& v : w3.mutable_data()) v *= 3.0;
  Rng r1(8), r2(8);
  SpectralState s1 = make_spectral_state(w, r1), s2 = make_spectral_state(w3, r2);
  Tensor a = spectral_normalize(w, s1, 30), b = spectral_normalize(w3, s2, 30);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(SpectralNorm, RandomSquareConvergesAndVectorsStayUnit) {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor w = Tensor::randn({16, 16}, rng);
    SpectralState st = make_spectral_state(w, rng);
    Tensor wn = spectral_normalize(w, st, 500);
    const double s = largest_singular_value(wn);
    EXPECT_GE(s, 1.0 - 1e-2);
    EXPECT_LE(s, 1.0 + 1e-2);
    double nu = 0.0, nv = 0.0;
    for (double v : st.u.data()) nu += v * v;
    for (double v : st.v.data()) nv += v * v;
    EXPECT_NEAR(nu, 1.0, 1e-12);
    EXPECT_NEAR(nv, 1.0, 1e-12);
  }
}

TEST(SpectralNorm, ZeroWeightDoesNotBlowUp) {
  Rng rng(10);
  Tensor w = Tensor::zeros({3, 3});
  SpectralState st = make_spectral_state(w, rng);
  Tensor wn = spectral_normalize(w, st, 1);
  for (double v : wn.data()) EXPECT_EQ(v, 0.0);
}

TEST(SpectralNorm, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  Tensor w = Tensor::randn({3, 2, 2, 2}, rng);
  SpectralState st = make_spectral_state(w, rng);
  spectral_normalize(w, st, 5);
  Tensor probe = Tensor::randn({3, 2, 2, 2}, rng);
  // Frozen u, v: the finite-difference oracle sees the same function.
  EXPECT_LT(gradcheck([&] { return sum(spectral_normalize(w, st, 0) * probe); }, {w}).max_rel_error,
            1e-4);
}

TEST(ResidualBlock, ZeroBranchIsIdentity) {
  Rng rng(12);
  ParameterSet ps;
  ResidualBlock block(ps, "res", {.channels = 3, .dilation = 2, .norm = NormKind::instance, .spectral = false},
                      rng);
  for (const auto& e : ps.entries())
    if (e.name.find("weight") != std::string::npos) {
      Tensor t = e.tensor;
      for (double& v : t.mutable_data()) v = 0.0;
    }
  Tensor x = Tensor::randn({1, 3, 6, 6}, rng);
  Tensor y = block.forward(x, kTrain);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(ResidualBlock, PreservesShapeForDilations) {
  Rng rng(13);
  for (std::size_t d : {1u, 2u}) {
    ParameterSet ps;
    ResidualBlock block(ps, "res", {.channels = 4, .dilation = d, .norm = NormKind::batch}, rng);
    Tensor x = Tensor::randn({2, 4, 8, 6}, rng);
    EXPECT_EQ(block.forward(x, kTrain).shape(), x.shape());
  }
}

TEST(ResidualBlock, ChannelMismatchRejected) {
  Rng rng(14);
  ParameterSet ps;
  ResidualBlock block(ps, "res", {.channels = 4}, rng);
  EXPECT_THROW(block.forward(Tensor::zeros({1, 3, 8, 8}), kTrain), ShapeError);
}

TEST(ResidualBlock, GradientFlowsThroughBothPaths) {
  Rng rng(15);
  ParameterSet ps;
  ResidualBlock block(ps, "res", {.channels = 2, .dilation = 2, .norm = NormKind::instance}, rng);
  Tensor x = Tensor::randn({1, 2, 5, 5}, rng);
  Tensor probe = Tensor::randn({1, 2, 5, 5}, rng);
  auto loss = [&] { return sum(block.forward(x, kFrozenTrain) * probe); };
  EXPECT_LT(gradcheck(loss, {x}).max_rel_error, 1e-4);
  // Freeze F: the input gradient must still be the skip path's (== probe).
  for (const auto& e : ps.entries()) Tensor(e.tensor).set_requires_grad(false);
  Tape tape;
  TapeScope scope(tape);
  x.set_requires_grad(true);
  tape.backward(loss());
  double norm = 0.0;
  for (double g : x.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
}

TEST(PatchGan, ExtentFor256Is30) {
  EXPECT_EQ(patchgan_output_extent(256), 30u);
  PatchDiscriminator d(3, 2, true, 1);
  Tensor y = d.forward(Tensor::zeros({1, 3, 256, 256}), kEval);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 30, 30}));
}

TEST(PatchGan, ZeroInputGivesZeroLogits) {
  PatchDiscriminator d(4, 4, true, 2);
  Tensor y = d.forward(Tensor::zeros({1, 4, 80, 80}), kEval);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(PatchGan, ReceptiveFieldIsSeventyPixels) {
  // Logit (i, j) sees input rows [8i - 23, 8i + 46]: total stride 8, offset
  // 1 + 2*1 + 4*1 + 8*1 + 8*1 = 23 from the pad-1 layers.
  PatchDiscriminator d(1, 2, false, 3);
  Rng rng(16);
  const std::size_t size = 96;
  Tensor x = Tensor::randn({1, 1, size, size}, rng);
  Tensor base = d.forward(x, kEval);
  const std::size_t out = base.dim(2);
  for (auto [r, c] : {std::pair<long, long>{48, 50}, {0, 0}, {70, 13}}) {
    Tensor x2 = x.detach();
    x2.mutable_data()[r * size + c] += 1.0;
    Tensor y = d.forward(x2, kEval);
    for (std::size_t i = 0; i < out; ++i)
      for (std::size_t j = 0; j < out; ++j) {
        const long top = 8 * static_cast<long>(i) - 23, left = 8 * static_cast<long>(j) - 23;
        const bool covered = r >= top && r < top + 70 && c >= left && c < left + 70;
        const bool changed = y[i * out + j] != base[i * out + j];
        EXPECT_EQ(changed, covered) << "logit " << i << "," << j << " pixel " << r << "," << c;
      }
  }
}

TEST(PatchGan, SmallInputWarns) {
  std::vector<std::string> warnings;
  set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
  PatchDiscriminator d(1, 2, true, 4);
  d.forward(Tensor::zeros({1, 1, 32, 32}), kEval);
  set_warning_sink(nullptr);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("receptive field"), std::string::npos);
}

TEST(ParameterSet, DuplicateNamesRejected) {
  ParameterSet ps;
  ps.add("a", Tensor::zeros({1}));
  EXPECT_THROW(ps.add("a", Tensor::zeros({1})), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsBitwiseExact) {
  PatchDiscriminator a(2, 3, true, 5), b(2, 3, true, 99);
  Checkpoint ck;
  ck.metadata["hash"] = "abc";
  store_parameters(ck, a.params(), "d.");
  std::stringstream ss;
  write_checkpoint(ss, ck);
  Checkpoint back = read_checkpoint(ss);
  EXPECT_EQ(back.metadata.at("hash"), "abc");
  restore_parameters(back, b.params(), "d.");
  for (std::size_t i = 0; i < a.params().entries().size(); ++i) {
    const auto& ea = a.params().entries()[i];
    const auto& eb = b.params().entries()[i];
    ASSERT_EQ(ea.name, eb.name);
    for (std::size_t k = 0; k < ea.tensor.numel(); ++k)
      EXPECT_EQ(std::bit_cast<std::uint64_t>(ea.tensor[k]), std::bit_cast<std::uint64_t>(eb.tensor[k]));
  }
  std::stringstream again;
  write_checkpoint(again, back);
  std::stringstream first;
  write_checkpoint(first, ck);
  EXPECT_EQ(again.str(), first.str());
}

TEST(Checkpoint, TruncationReportsOffset) {
  Checkpoint ck;
  ck.tensors.emplace_back("w", Tensor::ones({4}));
  std::stringstream ss;
  write_checkpoint(ss, ck);
  const std::string bytes = ss.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 5));
  try {
    read_checkpoint(cut);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), bytes.size() - 5);
  }
  std::stringstream bad("NOTACKPT........");
  EXPECT_THROW(read_checkpoint(bad), FormatError);
}

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "gradcheck.hpp"
#include "inpaint/error.hpp"
#include "inpaint/losses.hpp"
#include "inpaint/metrics.hpp"
#include "inpaint/ops.hpp"

using namespace inpaint;
using inpaint::testing::gradcheck;

namespace {

Tensor random_image(Shape s, Rng& rng) {
  Tensor t(s);
  for (double& v : t.mutable_data()) v = std::floor(rng.uniform(0.0, 256.0));
  return t;
}

double psnr_reference(const Tensor& a, const Tensor& b) {
  double mse = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]) / a.numel();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

// Direct 2-D Gaussian window evaluation, single plane.
double ssim_reference(const Tensor& a, const Tensor& b) {
  const int h = a.dim(2), w = a.dim(3), k = 11;
  double g[11][11], total = 0.0;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) total += g[y][x] = std::exp(-((y - 5) * (y - 5) + (x - 5) * (x - 5)) / 4.5);
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double sum = 0.0;
  int count = 0;
  for (int oy = 0; oy + k <= h; ++oy)
    for (int ox = 0; ox + k <= w; ++ox) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x) {
          const double wt = g[y][x] / total, va = a[(oy + y) * w + ox + x], vb = b[(oy + y) * w + ox + x];
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      const double vara = saa - ma * ma, varb = sbb - mb * mb, cov = sab - ma * mb;
      sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (vara + varb + c2));
      ++count;
    }
  return sum / count;
}

}  // namespace

TEST(L1Loss, Examples) {
  EXPECT_EQ(l1_loss(Tensor({2}, {3.0, -1.0}), Tensor({2}, {3.0, -1.0})).item(), 0.0);
  EXPECT_EQ(l1_loss(Tensor::zeros({2, 3}), Tensor::ones({2, 3})).item(), 1.0);
  EXPECT_EQ(l1_loss(Tensor({2}, {0.0, 2.0}), Tensor({2}, {1.0, 1.0})).item(), 1.0);
}

TEST(AdversarialLoss, Examples) {
  const auto half = adversarial_losses(Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1, 1, 3, 3}));
  EXPECT_NEAR(half.discriminator.item(), 2.0 * std::log(2.0), 1e-12);
  const auto perfect = adversarial_losses(Tensor::full({4}, 40.0), Tensor::full({4}, -40.0));
  EXPECT_LT(perfect.discriminator.item(), 1e-15);
  EXPECT_TRUE(std::isfinite(adversarial_losses(Tensor::full({1}, 1e4), Tensor::full({1}, 1e4)).discriminator.item()));
  double previous = INFINITY;
  for (double z = -20.0; z <= 20.0; z += 0.5) {
    const double lg = generator_adversarial_loss(Tensor::scalar(z)).item();
    EXPECT_LT(lg, previous);
    previous = lg;
  }
}

TEST(PerceptualLoss, IdentityAndSign) {
  Rng rng(200);
  const auto fx = FeatureExtractor::standard();
  Tensor a = Tensor::randn({2, 3, 16, 16}, rng), b = Tensor::randn({2, 3, 16, 16}, rng);
  EXPECT_EQ(perceptual_loss(a, a, fx).item(), 0.0);
  EXPECT_GT(perceptual_loss(a, b, fx).item(), 0.0);
  EXPECT_EQ(perceptual_loss(a, b, FeatureExtractor::identity()).item(), l1_loss(a, b).item());
  EXPECT_EQ(fx.features(a).size(), 4u);
}

TEST(GramMatrix, Examples) {
  Tensor onehot = Tensor::zeros({1, 2, 3, 3});
  onehot.mutable_data()[4] = 1.0;
  const Tensor g = gram_matrix(onehot);
  EXPECT_DOUBLE_EQ(g[0], 1.0 / 18.0);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_EQ(g[i], 0.0);
  const Tensor zero = gram_matrix(Tensor::zeros({2, 3, 4, 4}));
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
  Rng rng(201);
  const Tensor r = gram_matrix(Tensor::randn({1, 5, 4, 3}, rng));
  Eigen::MatrixXd m(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) m(i, j) = r[i * 5 + j];
  EXPECT_LT((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff(), -1e-12);
}

TEST(StyleLoss, SymmetryAndPermutation) {
  Rng rng(202);
  const auto fx = FeatureExtractor::standard();
  Tensor a = Tensor::randn({1, 3, 16, 16}, rng), b = Tensor::randn({1, 3, 16, 16}, rng);
  EXPECT_EQ(style_loss(a, a, fx).item(), 0.0);
  EXPECT_NEAR(style_loss(a, b, fx).item(), style_loss(b, a, fx).item(), 1e-15);
  // Channel permutation P: G' = P G P^T, so the spectra agree.
  Tensor perm = concat({slice(a, 1, 2, 3), slice(a, 1, 0, 1), slice(a, 1, 1, 2)}, 1);
  auto spectrum = [](const Tensor& g) {
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = g[i * 3 + j];
    return Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(m).eigenvalues().eval();
  };
  EXPECT_LT((spectrum(gram_matrix(a)) - spectrum(gram_matrix(perm))).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TotalLoss, Weights) {
  const Tensor one = Tensor::scalar(1.0), zero = Tensor::scalar(0.0);
  EXPECT_NEAR(total_g2_loss({one, one, one, one}, {}).item(), 251.2, 1e-12);
  EXPECT_EQ(total_g2_loss({zero, zero, zero, zero}, {}).item(), 0.0);
  EXPECT_EQ(total_g2_loss({one, one, one, one}, {0, 0, 0, 0}).item(), 0.0);
  EXPECT_THROW(total_g2_loss({one, one, one, one}, {1, -0.1, 0.1, 250}), std::invalid_argument);
}

TEST(LossGradients, MatchFiniteDifferences) {
  Rng rng(203);
  const FeatureExtractor fx({3, 4, 5}, 7);
  Tensor a = Tensor::randn({1, 3, 6, 6}, rng), b = Tensor::randn({1, 3, 6, 6}, rng);
  Tensor real = Tensor::randn({1, 1, 3, 3}, rng), fake = Tensor::randn({1, 1, 3, 3}, rng);
  const double tol = 1e-3;
  EXPECT_LT(gradcheck([&] { return l1_loss(a, b); }, {a}).max_rel_error, tol);
  EXPECT_LT(gradcheck([&] { return discriminator_loss(real, fake); }, {real, fake}).max_rel_error, tol);
  EXPECT_LT(gradcheck([&] { return generator_adversarial_loss(fake); }, {fake}).max_rel_error, tol);
  EXPECT_LT(gradcheck([&] { return perceptual_loss(a, b, fx); }, {a}).max_rel_error, tol);
  EXPECT_LT(gradcheck([&] { return style_loss(a, b, fx); }, {a}).max_rel_error, tol);
  Tensor phi = Tensor::randn({2, 3, 2, 3}, rng), probe = Tensor::randn({2, 3, 3}, rng);
  EXPECT_LT(gradcheck([&] { return sum(gram_matrix(phi) * probe); }, {phi}).max_rel_error, 1e-6);
  EXPECT_LT(gradcheck(
                [&] {
                  return total_g2_loss({l1_loss(a, b), generator_adversarial_loss(fake), perceptual_loss(a, b, fx),
                                        style_loss(a, b, fx)},
                                       {});
                },
                {a, fake})
                .max_rel_error,
            tol);
}

TEST(Psnr, ClosedForms) {
  Rng rng(204);
  Tensor a = random_image({1, 3, 8, 8}, rng);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  Tensor zero = Tensor::zeros({1, 1, 4, 4});
  EXPECT_NEAR(psnr(zero, Tensor::ones({1, 1, 4, 4})), 48.13, 0.01);
  EXPECT_NEAR(psnr(zero, Tensor::ones({1, 1, 4, 4})), 20.0 * std::log10(255.0), 1e-12);
  EXPECT_NEAR(psnr(zero, Tensor::full({1, 1, 4, 4}, 255.0)), 0.0, 1e-12);
}

TEST(Ssim, ClosedForms) {
  Rng rng(205);
  Tensor a = random_image({1, 3, 16, 16}, rng);
  EXPECT_EQ(ssim(a, a), 1.0);
  Tensor neg(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) neg.mutable_data()[i] = 255.0 - a[i];
  EXPECT_LT(ssim(a, neg), 1.0);
  const double c1 = std::pow(0.01 * 255, 2);
  const double want = (2 * 100.0 * 110.0 + c1) / (100.0 * 100.0 + 110.0 * 110.0 + c1);
  EXPECT_NEAR(ssim(Tensor::full({1, 1, 12, 12}, 100.0), Tensor::full({1, 1, 12, 12}, 110.0)), want, 1e-12);
  EXPECT_THROW(ssim(Tensor::zeros({1, 1, 10, 10}), Tensor::zeros({1, 1, 10, 10})), ShapeError);
}

TEST(Metrics, AgreeWithScalarReferences) {
  Rng rng(206);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = random_image({1, 1, 16, 16}, rng), b = random_image({1, 1, 16, 16}, rng);
    EXPECT_NEAR(psnr(a, b), psnr_reference(a, b), 1e-9);
    EXPECT_NEAR(ssim(a, b), ssim_reference(a, b), 1e-9);
  }
}

TEST(Fid, ClosedForms) {
  Rng rng(207);
  std::vector<std::vector<double>> x(20, std::vector<double>(3)), y(25, std::vector<double>(3));
  for (auto& r : x)
    for (double& v : r) v = rng.normal();
  for (auto& r : y)
    for (double& v : r) v = rng.normal(0.5, 2.0);
  EXPECT_LT(fid(x, x).value, 1e-6);
  EXPECT_NEAR(fid(x, y).value, fid(y, x).value, 1e-8);
  const double s = 1.0 / std::sqrt(2.0);
  const std::vector<std::vector<double>> p{{-s}, {s}}, q{{1 - s}, {1 + s}};
  EXPECT_NEAR(fid(p, q).value, 1.0, 1e-6);
  const std::vector<std::vector<double>> q2{{2 - s}, {2 + s}};
  EXPECT_NEAR(fid(p, q2).value, 4.0, 1e-6);
  EXPECT_NEAR(fid(p, q2, {.squared_mean_term = false}).value, 2.0, 1e-6);
  EXPECT_FALSE(fid(p, q).regularized);
}

TEST(Fid, SingularCovarianceIsRegularized) {
  const std::vector<std::vector<double>> a{{0, 0, 0}, {1, 1, 1}}, b{{0, 1, 0}, {1, 0, 1}};
  const FidResult r = fid(a, b);
  EXPECT_TRUE(r.regularized);
  EXPECT_TRUE(std::isfinite(r.value));
  EXPECT_THROW(fid({{1.0}}, b), std::invalid_argument);
}

TEST(Fid, LargeGaussianSamples) {
  Rng rng(208);
  std::vector<std::vector<double>> a(10000, std::vector<double>(1)), b(10000, std::vector<double>(1));
  for (auto& r : a) r[0] = rng.normal(0.0, 1.0);
  for (auto& r : b) r[0] = rng.normal(1.0, 1.0);
  EXPECT_NEAR(fid(a, b).value, 1.0, 0.05);
}

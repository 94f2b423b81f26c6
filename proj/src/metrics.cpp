#include "inpaint/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

#include "inpaint/error.hpp"

namespace inpaint {

namespace {

void require_same_images(const Tensor& a, const Tensor& b, const char* where) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(where) + ": shapes differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size);
  const double center = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - center;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Valid-mode separable filtering of one plane.
std::vector<double> filter_valid(const double* x, std::size_t h, std::size_t w, const std::vector<double>& k) {
  const std::size_t n = k.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(h * ow, 0.0), out(oh * ow, 0.0);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) acc += k[t] * x[r * w + c + t];
      rows[r * ow + c] = acc;
    }
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) acc += k[t] * rows[(r + t) * ow + c];
      out[r * ow + c] = acc;
    }
  return out;
}

Eigen::MatrixXd as_matrix(const std::vector<std::vector<double>>& samples, const char* side) {
  if (samples.size() < 2) throw std::invalid_argument(std::string("fid: need at least 2 ") + side + " samples");
  const std::size_t d = samples.front().size();
  if (d == 0) throw std::invalid_argument("fid: empty feature vectors");
  Eigen::MatrixXd m(samples.size(), d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != d) throw ShapeError(std::string("fid: ragged ") + side + " feature vectors");
    for (std::size_t j = 0; j < d; ++j) m(i, j) = samples[i][j];
  }
  return m;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& mu) {
  const Eigen::MatrixXd centered = x.rowwise() - mu;
  return (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
}

bool is_singular(const Eigen::MatrixXd& c) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c, Eigen::EigenvaluesOnly);
  const double top = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  return es.eigenvalues().minCoeff() <= 1e-12 * top;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& c) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  const Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double max_value) {
  require_same_images(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / (se / static_cast<double>(a.numel())));
}

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt) {
  require_same_images(a, b, "ssim");
  if (a.ndim() != 4) throw ShapeError("ssim expects [N,C,H,W], got " + shape_str(a.shape()));
  const std::size_t h = a.dim(2), w = a.dim(3);
  if (h < opt.window || w < opt.window)
    throw ShapeError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than the " +
                     std::to_string(opt.window) + "x" + std::to_string(opt.window) + " window");
  const auto k = gaussian_window(opt.window, opt.sigma);
  const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2), c2 = std::pow(opt.k2 * opt.dynamic_range, 2);
  const std::size_t planes = a.dim(0) * a.dim(1), px = h * w;
  double total = 0.0;
  std::vector<double> aa(px), bb(px), ab(px);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* x = a.data().data() + p * px;
    const double* y = b.data().data() + p * px;
    for (std::size_t i = 0; i < px; ++i) {
      aa[i] = x[i] * x[i];
      bb[i] = y[i] * y[i];
      ab[i] = x[i] * y[i];
    }
    const auto mu_a = filter_valid(x, h, w, k), mu_b = filter_valid(y, h, w, k);
    const auto e_aa = filter_valid(aa.data(), h, w, k), e_bb = filter_valid(bb.data(), h, w, k);
    const auto e_ab = filter_valid(ab.data(), h, w, k);
    double plane = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = e_aa[i] - mu_a[i] * mu_a[i], vb = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      plane += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    total += plane / static_cast<double>(mu_a.size());
  }
  return total / static_cast<double>(planes);
}

FidResult fid(const std::vector<std::vector<double>>& real, const std::vector<std::vector<double>>& gen,
              const FidOptions& opt) {
  const Eigen::MatrixXd xr = as_matrix(real, "real"), xg = as_matrix(gen, "generated");
  if (xr.cols() != xg.cols()) throw ShapeError("fid: feature dimensions differ");
  const Eigen::RowVectorXd mu_r = xr.colwise().mean(), mu_g = xg.colwise().mean();
  Eigen::MatrixXd cr = covariance(xr, mu_r), cg = covariance(xg, mu_g);
  FidResult result;
  if (is_singular(cr) || is_singular(cg)) {
    const auto eye = Eigen::MatrixXd::Identity(cr.rows(), cr.cols());
    cr += opt.regularization * eye;
    cg += opt.regularization * eye;
    result.regularized = true;
  }
  // Tr((Cr Cg)^1/2) = Tr((Cr^1/2 Cg Cr^1/2)^1/2), the inner product being symmetric PSD.
  const Eigen::MatrixXd root_r = psd_sqrt(cr);
  Eigen::MatrixXd inner = root_r * cg * root_r;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  double trace_root = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) trace_root += std::sqrt(std::max(0.0, es.eigenvalues()(i)));
  const double dist2 = (mu_r - mu_g).squaredNorm();
  const double mean_term = opt.squared_mean_term ? dist2 : std::sqrt(dist2);
  result.value = std::max(0.0, mean_term + cr.trace() + cg.trace() - 2.0 * trace_root);
  return result;
}

std::vector<std::vector<double>> rows(const Tensor& t) {
  if (t.ndim() != 2) throw ShapeError("rows expects [N,D], got " + shape_str(t.shape()));
  std::vector<std::vector<double>> out(t.dim(0));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    out[i].assign(t.data().begin() + i * t.dim(1), t.data().begin() + (i + 1) * t.dim(1));
  return out;
}

}  // namespace inpaint

#include "treelso/frechet.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "treelso/errors.hpp"

namespace treelso::metrics {

namespace {

constexpr double kEigTolerance = 1e-6;

Eigen::MatrixXd to_eigen(const GaussianSummary& s) {
  const auto d = static_cast<Eigen::Index>(s.dim());
  Eigen::MatrixXd m(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      m(i, j) = s.covariance[static_cast<std::size_t>(i * d + j)];
  return m;
}

// Symmetric PSD square root with clamping of slightly negative eigenvalues.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success)
    throw NumericalError(std::string("frechet: eigendecomposition failed for ") + what);
  Eigen::VectorXd ev = solver.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -kEigTolerance)
      throw NumericalError(std::string("frechet: matrix not PSD within tolerance: ") +
                           what);
    if (ev(i) < 0.0) ev(i) = 0.0;
  }
  return solver.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
         solver.eigenvectors().transpose();
}

}  // namespace

FeatureMap feature_map_by_name(const std::string& name) {
  if (name == "flatten") {
    return {"flatten", [](const Image& img) { return img.data; }};
  }
  if (name == "downsample4") {
    return {"downsample4", [](const Image& img) {
              require(img.height % 4 == 0 && img.width % 4 == 0,
                      "downsample4: image sides must be multiples of 4");
              const int bh = img.height / 4, bw = img.width / 4;
              std::vector<double> out(
                  static_cast<std::size_t>(bh) * bw * img.channels, 0.0);
              for (int by = 0; by < bh; ++by)
                for (int bx = 0; bx < bw; ++bx)
                  for (int c = 0; c < img.channels; ++c) {
                    double acc = 0.0;
                    for (int dy = 0; dy < 4; ++dy)
                      for (int dx = 0; dx < 4; ++dx)
                        acc += img.at(4 * by + dy, 4 * bx + dx, c);
                    out[(static_cast<std::size_t>(by) * bw + bx) * img.channels + c] =
                        acc / 16.0;
                  }
              return out;
            }};
  }
  throw InvalidInput("unknown feature map '" + name + "'");
}

std::vector<std::string> feature_map_names() { return {"flatten", "downsample4"}; }

GaussianSummary gaussian_fit(const std::vector<std::vector<double>>& features) {
  require(features.size() >= 2, "gaussian_fit: need at least 2 samples");
  const std::size_t d = features.front().size();
  for (const auto& f : features)
    require(f.size() == d, "gaussian_fit: inconsistent feature dimension");

  GaussianSummary s;
  s.mean.assign(d, 0.0);
  for (const auto& f : features)
    for (std::size_t i = 0; i < d; ++i) s.mean[i] += f[i];
  for (double& v : s.mean) v /= static_cast<double>(features.size());

  s.covariance.assign(d * d, 0.0);
  for (const auto& f : features)
    for (std::size_t i = 0; i < d; ++i) {
      const double di = f[i] - s.mean[i];
      for (std::size_t j = i; j < d; ++j)
        s.covariance[i * d + j] += di * (f[j] - s.mean[j]);
    }
  const double norm = 1.0 / static_cast<double>(features.size() - 1);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      s.covariance[i * d + j] *= norm;
      s.covariance[j * d + i] = s.covariance[i * d + j];
    }
  return s;
}

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  require(a.dim() == b.dim(), "frechet: dimension mismatch");
  const std::size_t d = a.dim();
  require(a.covariance.size() == d * d && b.covariance.size() == d * d,
          "frechet: covariance shape mismatch");
  for (const GaussianSummary* s : {&a, &b})
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j)
        require(std::abs(s->cov(i, j) - s->cov(j, i)) <= 1e-9,
                "frechet: covariance not symmetric within tolerance");

  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double delta = a.mean[i] - b.mean[i];
    mean_term += delta * delta;
  }

  const Eigen::MatrixXd s1 = to_eigen(a);
  const Eigen::MatrixXd s2 = to_eigen(b);
  const Eigen::MatrixXd root1 = sqrt_psd(s1, "covariance A");
  // trace of sqrt(S1 S2) through the symmetric product S1^(1/2) S2 S1^(1/2)
  const Eigen::MatrixXd inner = root1 * s2 * root1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(inner);
  if (solver.info() != Eigen::Success)
    throw NumericalError("frechet: eigendecomposition failed for the inner product");
  double trace_sqrt = 0.0;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    double ev = solver.eigenvalues()(i);
    if (ev < -kEigTolerance)
      throw NumericalError("frechet: inner product not PSD within tolerance");
    if (ev < 0.0) ev = 0.0;
    trace_sqrt += std::sqrt(ev);
  }

  double result = mean_term + s1.trace() + s2.trace() - 2.0 * trace_sqrt;
  if (result < 0.0) {
    if (result < -kEigTolerance)
      throw NumericalError("frechet: negative distance beyond tolerance");
    result = 0.0;
  }
  return result;
}

double fid_like(const ImageBatch& images_a, const ImageBatch& images_b,
                const FeatureMap& map) {
  require(images_a.size() >= 2 && images_b.size() >= 2,
          "fid_like: both sets need at least 2 images");
  std::vector<std::vector<double>> fa, fb;
  fa.reserve(images_a.size());
  fb.reserve(images_b.size());
  for (const Image& img : images_a) fa.push_back(map.apply(img));
  for (const Image& img : images_b) fb.push_back(map.apply(img));
  return frechet_distance(gaussian_fit(fa), gaussian_fit(fb));
}

}  // namespace treelso::metrics

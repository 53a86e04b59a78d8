#pragma once

#include <functional>
#include <string>
#include <vector>

#include "treelso/image.hpp"

namespace treelso::metrics {

struct GaussianSummary {
  std::vector<double> mean;
  std::vector<double> covariance;  // d x d, row-major, symmetric

  std::size_t dim() const { return mean.size(); }
  double cov(std::size_t i, std::size_t j) const { return covariance[i * dim() + j]; }
};

// Named deterministic embedding of an image into a fixed-length vector.
struct FeatureMap {
  std::string name;
  std::function<std::vector<double>(const Image&)> apply;
};

// Built-ins: "flatten" (raw pixels) and "downsample4" (4x mean pooling).
FeatureMap feature_map_by_name(const std::string& name);
std::vector<std::string> feature_map_names();

// Sample mean and covariance (1/(n-1) normalization), n >= 2.
GaussianSummary gaussian_fit(const std::vector<std::vector<double>>& features);

// ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), with the matrix square root
// taken through the symmetric eigendecomposition of S1^(1/2) S2 S1^(1/2).
// Eigenvalues in [-1e-6, 0) are clamped to zero; smaller ones are an error.
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);

double fid_like(const ImageBatch& images_a, const ImageBatch& images_b,
                const FeatureMap& map);

}  // namespace treelso::metrics

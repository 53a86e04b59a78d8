#pragma once

#include <cstdint>

#include "treelso/image.hpp"
#include "treelso/lso_loop.hpp"
#include "treelso/rng.hpp"

namespace treelso::faces {

// Parametric toy face on a 16x16 grayscale canvas: circle outline, two eye
// dots and a mouth arc whose signed curvature is an affine function of the
// smile degree. Nuisance parameters move everything except the mouth.
struct FaceParams {
  double degree = 0.0;        // smile degree in [0, 5]
  double face_radius = 6.3;   // [5.9, 6.7]
  double eye_spacing = 4.2;   // [3.0, 5.5]
  double brightness = 0.85;   // [0.65, 1.0]
  std::uint64_t seed = 0;     // drives the additive pixel noise

  void validate() const;
};

inline constexpr int kFaceImageSize = 16;
inline constexpr double kDegreeMin = 0.0;
inline constexpr double kDegreeMax = 5.0;

Image generate_face(const FaceParams& p);

// Matched-filter smile estimate: correlates the mouth region against 51
// curvature templates (degree grid step 0.1) and returns the
// parabolic-interpolated argmax, clamped to [0, 5].
double score(const Image& image);

// n faces with degree ~ U[min_degree, max_degree] and uniformly sampled
// nuisance; stored scores come from the scorer, not the generating degree.
// Initial weights are uniform.
lso::WeightedDataset make_dataset(std::size_t n, double max_degree, std::uint64_t seed);
lso::WeightedDataset make_dataset_range(std::size_t n, double min_degree,
                                        double max_degree, std::uint64_t seed);

}  // namespace treelso::faces

#include "treelso/face_task.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace treelso::faces {

namespace {

constexpr double kCenter = 7.5;

// stroke coverage: full ink within kCore of the curve, linear falloff after
constexpr double kStrokeCore = 0.3;
constexpr double kStrokeFalloff = 0.4;

// mouth geometry is independent of the nuisance parameters; the arc straddles
// the image's lower quarter so corner lift and center dip sit in different
// 4-pixel bands
constexpr double kMouthY = 11.4;
constexpr double kMouthHalfWidth = 2.6;
constexpr double kCurvatureAtZero = -0.4;
constexpr double kCurvaturePerDegree = 0.36;
constexpr int kArcSamples = 64;

// scorer mask stays clear of the face outline: smallest radius minus stroke
// reach minus a margin
constexpr double kMaskRadiusLimit = 5.15;

constexpr double kEyeCore = 0.45;
constexpr double kEyeFalloff = 0.4;
constexpr double kEyeHeightFactor = 0.38;

constexpr double kNoiseAmplitude = 0.02;

constexpr int kTemplateCount = 51;  // degree grid step 0.1
constexpr double kTemplateStep = 0.1;
constexpr double kMaskThreshold = 0.02;

double stroke_coverage(double dist, double core, double falloff) {
  return std::clamp(1.0 - std::max(0.0, dist - core) / falloff, 0.0, 1.0);
}

double mouth_curvature(double degree) {
  return kCurvatureAtZero + kCurvaturePerDegree * degree;
}

// min distance from a pixel to the sampled mouth arc
double mouth_distance(double px, double py, double curvature) {
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < kArcSamples; ++s) {
    const double u = -1.0 + 2.0 * s / (kArcSamples - 1);
    const double ax = kCenter + u * kMouthHalfWidth;
    const double ay = kMouthY - curvature * (u * u - 0.5);
    const double d = std::hypot(px - ax, py - ay);
    best = std::min(best, d);
  }
  return best;
}

// mouth arc alone, brightness 1, no noise; used for templates
Image render_mouth_only(double degree) {
  Image img(kFaceImageSize, kFaceImageSize, 1);
  const double curvature = mouth_curvature(degree);
  for (int y = 0; y < kFaceImageSize; ++y)
    for (int x = 0; x < kFaceImageSize; ++x)
      img.at(y, x, 0) =
          stroke_coverage(mouth_distance(x, y, curvature), kStrokeCore, kStrokeFalloff);
  return img;
}

struct TemplateBank {
  std::vector<Image> templates;
  std::vector<std::size_t> mask;  // pixel indices covered by any template
  std::vector<std::vector<double>> standardized;  // per template, masked + z-scored
};

const TemplateBank& template_bank() {
  static const TemplateBank bank = [] {
    TemplateBank b;
    b.templates.reserve(kTemplateCount);
    for (int i = 0; i < kTemplateCount; ++i)
      b.templates.push_back(render_mouth_only(i * kTemplateStep));
    for (int y = 0; y < kFaceImageSize; ++y)
      for (int x = 0; x < kFaceImageSize; ++x) {
        if (std::hypot(x - kCenter, y - kCenter) > kMaskRadiusLimit) continue;
        const std::size_t p = static_cast<std::size_t>(y) * kFaceImageSize + x;
        double peak = 0.0;
        for (const Image& t : b.templates) peak = std::max(peak, t.data[p]);
        if (peak > kMaskThreshold) b.mask.push_back(p);
      }
    for (const Image& t : b.templates) {
      std::vector<double> v(b.mask.size());
      double mean = 0.0;
      for (std::size_t q = 0; q < b.mask.size(); ++q) mean += t.data[b.mask[q]];
      mean /= static_cast<double>(b.mask.size());
      double var = 0.0;
      for (std::size_t q = 0; q < b.mask.size(); ++q) {
        v[q] = t.data[b.mask[q]] - mean;
        var += v[q] * v[q];
      }
      const double norm = std::sqrt(var);
      for (double& x : v) x /= norm;
      b.standardized.push_back(std::move(v));
    }
    return b;
  }();
  return bank;
}

}  // namespace

void FaceParams::validate() const {
  require(degree >= kDegreeMin && degree <= kDegreeMax,
          "face params: degree out of [0,5]");
  require(face_radius >= 5.9 && face_radius <= 6.7,
          "face params: face_radius out of [5.9,6.7]");
  require(eye_spacing >= 3.0 && eye_spacing <= 5.5,
          "face params: eye_spacing out of [3.0,5.5]");
  require(brightness >= 0.65 && brightness <= 1.0,
          "face params: brightness out of [0.65,1.0]");
}

Image generate_face(const FaceParams& p) {
  p.validate();
  Image img(kFaceImageSize, kFaceImageSize, 1);
  const double curvature = mouth_curvature(p.degree);
  const double eye_y = kCenter - kEyeHeightFactor * p.face_radius;
  const double eye_left = kCenter - p.eye_spacing / 2.0;
  const double eye_right = kCenter + p.eye_spacing / 2.0;

  for (int y = 0; y < kFaceImageSize; ++y)
    for (int x = 0; x < kFaceImageSize; ++x) {
      const double dx = x - kCenter;
      const double dy = y - kCenter;
      const double ring =
          stroke_coverage(std::abs(std::hypot(dx, dy) - p.face_radius), kStrokeCore,
                          kStrokeFalloff);
      const double eyes = std::max(
          stroke_coverage(std::hypot(x - eye_left, y - eye_y), kEyeCore, kEyeFalloff),
          stroke_coverage(std::hypot(x - eye_right, y - eye_y), kEyeCore, kEyeFalloff));
      const double mouth =
          stroke_coverage(mouth_distance(x, y, curvature), kStrokeCore, kStrokeFalloff);
      img.at(y, x, 0) = p.brightness * std::max({ring, eyes, mouth});
    }

  Rng noise(p.seed);
  for (double& v : img.data)
    v = std::clamp(v + kNoiseAmplitude * (2.0 * noise.uniform01() - 1.0), 0.0, 1.0);
  snap_to_f32(img);
  return img;
}

double score(const Image& image) {
  require(image.height == kFaceImageSize && image.width == kFaceImageSize &&
              image.channels == 1,
          "score: expected a 16x16x1 image");
  const TemplateBank& bank = template_bank();

  std::vector<double> region(bank.mask.size());
  double mean = 0.0;
  for (std::size_t q = 0; q < bank.mask.size(); ++q) mean += image.data[bank.mask[q]];
  mean /= static_cast<double>(bank.mask.size());
  double var = 0.0;
  for (std::size_t q = 0; q < bank.mask.size(); ++q) {
    region[q] = image.data[bank.mask[q]] - mean;
    var += region[q] * region[q];
  }
  const double norm = std::sqrt(var);

  std::vector<double> ncc(kTemplateCount, 0.0);
  if (norm > 0.0) {
    for (int i = 0; i < kTemplateCount; ++i) {
      double dot = 0.0;
      for (std::size_t q = 0; q < region.size(); ++q)
        dot += region[q] * bank.standardized[static_cast<std::size_t>(i)][q];
      ncc[static_cast<std::size_t>(i)] = dot / norm;
    }
  }

  int best = 0;
  for (int i = 1; i < kTemplateCount; ++i)
    if (ncc[static_cast<std::size_t>(i)] > ncc[static_cast<std::size_t>(best)]) best = i;

  double refined = static_cast<double>(best);
  if (best > 0 && best + 1 < kTemplateCount) {
    const double lo = ncc[static_cast<std::size_t>(best - 1)];
    const double mid = ncc[static_cast<std::size_t>(best)];
    const double hi = ncc[static_cast<std::size_t>(best + 1)];
    const double denom = lo - 2.0 * mid + hi;
    if (denom < 0.0) refined += 0.5 * (lo - hi) / denom;
  }
  return std::clamp(refined * kTemplateStep, kDegreeMin, kDegreeMax);
}

lso::WeightedDataset make_dataset_range(std::size_t n, double min_degree,
                                        double max_degree, std::uint64_t seed) {
  require(n >= 1, "make_dataset: n must be >= 1");
  require(min_degree >= kDegreeMin && min_degree <= kDegreeMax,
          "make_dataset: min_degree out of [0,5]");
  require(max_degree >= min_degree && max_degree <= kDegreeMax,
          "make_dataset: max_degree out of [min_degree,5]");
  Rng rng(seed);
  lso::WeightedDataset ds;
  ds.images.reserve(n);
  ds.scores.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    FaceParams p;
    p.degree = rng.uniform(min_degree, max_degree);
    p.face_radius = rng.uniform(5.9, 6.7);
    p.eye_spacing = rng.uniform(3.0, 5.5);
    p.brightness = rng.uniform(0.65, 1.0);
    p.seed = rng.next_u64();
    Image img = generate_face(p);
    const double s = score(img);
    ds.images.push_back(std::move(img));
    ds.scores.push_back(s);
  }
  ds.weights.assign(n, 1.0 / static_cast<double>(n));
  return ds;
}

lso::WeightedDataset make_dataset(std::size_t n, double max_degree, std::uint64_t seed) {
  return make_dataset_range(n, kDegreeMin, max_degree, seed);
}

}  // namespace treelso::faces

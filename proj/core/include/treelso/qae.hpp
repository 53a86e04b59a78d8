#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "treelso/errors.hpp"
#include "treelso/image.hpp"
#include "treelso/rng.hpp"

namespace treelso::qae {

enum class Activation { Tanh, Identity };

// Desk-scale quantized autoencoder. The encoder is two non-overlapping
// strided 2x2 linear filter stages with a pointwise activation in between;
// the decoder mirrors them and ends in a sigmoid, so outputs live in (0,1).
// Images of H x W x C map to an (H/4) x (W/4) grid of embed_dim vectors.
struct QaeConfig {
  int image_height = 16;
  int image_width = 16;
  int image_channels = 1;
  int hidden_channels = 16;
  int embed_dim = 8;      // D
  int codebook_size = 16;  // K
  double beta = 0.25;      // commitment weight
  double learning_rate = 1e-3;
  int batch_size = 16;
  Activation activation = Activation::Tanh;

  int grid_height() const { return image_height / 4; }
  int grid_width() const { return image_width / 4; }
  void validate() const;
};

// h x w grid of codebook indices in [0, K).
struct LatentGrid {
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> idx;  // row-major

  LatentGrid() = default;
  LatentGrid(int h, int w) : height(h), width(w), idx(static_cast<std::size_t>(h) * w, 0) {}
  std::int32_t& at(int i, int j) { return idx[static_cast<std::size_t>(i) * width + j]; }
  std::int32_t at(int i, int j) const { return idx[static_cast<std::size_t>(i) * width + j]; }
  const std::vector<std::int32_t>& flatten() const { return idx; }
};

// h x w x D grid of real vectors (encoder output / quantized embeddings).
struct ContinuousGrid {
  int height = 0;
  int width = 0;
  int depth = 0;
  std::vector<double> v;

  ContinuousGrid() = default;
  ContinuousGrid(int h, int w, int d)
      : height(h), width(w), depth(d), v(static_cast<std::size_t>(h) * w * d, 0.0) {}
  double& at(int i, int j, int d) {
    return v[(static_cast<std::size_t>(i) * width + j) * depth + d];
  }
  double at(int i, int j, int d) const {
    return v[(static_cast<std::size_t>(i) * width + j) * depth + d];
  }
};

// K learnable embedding vectors of dimension D.
struct Codebook {
  int size = 0;  // K
  int dim = 0;   // D
  std::vector<double> v;

  Codebook() = default;
  Codebook(int k, int d) : size(k), dim(d), v(static_cast<std::size_t>(k) * d, 0.0) {}
  double& at(int k, int d) { return v[static_cast<std::size_t>(k) * dim + d]; }
  double at(int k, int d) const { return v[static_cast<std::size_t>(k) * dim + d]; }
};

struct QaeModel {
  QaeConfig cfg;
  // encoder stage 1: [hidden][channels][2][2] + bias, stage 2: [D][hidden][2][2] + bias
  std::vector<double> enc_w1, enc_b1, enc_w2, enc_b2;
  Codebook codebook;
  // decoder stage 1: [hidden][D][2][2] + bias, stage 2: [channels][hidden][2][2] + bias
  std::vector<double> dec_w1, dec_b1, dec_w2, dec_b2;

  static QaeModel zero_init(const QaeConfig& cfg);
  static QaeModel random_init(const QaeConfig& cfg, Rng& rng);
};

struct LossBreakdown {
  double reconstruction = 0.0;
  double codebook = 0.0;
  double commitment = 0.0;
  double total = 0.0;
};

// Gradients in the same parameter order as QaeModel.
struct Gradients {
  std::vector<double> enc_w1, enc_b1, enc_w2, enc_b2, codebook, dec_w1, dec_b1, dec_w2,
      dec_b2;
};

enum class QuantizeMode {
  Nearest,  // nearest-codebook lookup, straight-through gradient
  Bypass    // decoder consumes the encoder output directly (gradient checks)
};

struct AdamState {
  std::size_t step = 0;
  std::vector<double> m, v;
};

ContinuousGrid encode(const QaeModel& model, const Image& image);

// Copies every codebook vector the dataset never selects onto its nearest
// selected one. Unused codes otherwise keep their initialization and decode
// to untrained garbage; after collapsing they are exact duplicates, which the
// lowest-index quantization tie rule keeps inert. Returns the number of
// collapsed codes.
int collapse_unused_codes(QaeModel& model, const ImageBatch& images);

// Nearest codebook vector per cell under Euclidean distance, ties to the
// lowest index. Also returns the grid with each cell replaced by its vector.
std::pair<LatentGrid, ContinuousGrid> quantize(const Codebook& codebook,
                                               const ContinuousGrid& grid);

Image decode(const QaeModel& model, const LatentGrid& latent);

LatentGrid encode_latent(const QaeModel& model, const Image& image);

LossBreakdown vq_loss(const QaeModel& model, const ImageBatch& batch);

// Weighted total loss and its parameter gradients in one pass. Weights are
// normalized internally; per-sample losses are scaled by normalized weights.
std::pair<LossBreakdown, Gradients> loss_and_gradients(const QaeModel& model,
                                                       const ImageBatch& batch,
                                                       const std::vector<double>& weights,
                                                       QuantizeMode mode);

// One adaptive-moment gradient step on the total loss with straight-through
// gradients through quantization.
LossBreakdown train_step(QaeModel& model, const ImageBatch& batch,
                         const std::vector<double>& weights, AdamState& state);
LossBreakdown train_step(QaeModel& model, const ImageBatch& batch,
                         const std::vector<double>& weights);

// Epochs of minibatch steps with weight-proportional sampling with
// replacement. Returns the per-epoch mean loss over sampled batches.
std::vector<LossBreakdown> fit_weighted(QaeModel& model, const ImageBatch& images,
                                        const std::vector<double>& weights, int epochs,
                                        Rng& rng);

// TREELSO-QAE v1 checkpoint: text header (shapes, K, D, beta), then all
// parameters as 32-bit little-endian reals in declaration order.
void save_checkpoint(std::ostream& out, const QaeModel& model);
void save_checkpoint(const std::string& path, const QaeModel& model);
QaeModel load_checkpoint(std::istream& in);
QaeModel load_checkpoint(const std::string& path);

}  // namespace treelso::qae

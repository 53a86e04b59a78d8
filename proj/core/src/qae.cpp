#include "treelso/qae.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace treelso::qae {

namespace {

double activate(Activation a, double x) { return a == Activation::Tanh ? std::tanh(x) : x; }

// derivative expressed through the activated value
double activate_grad(Activation a, double activated) {
  return a == Activation::Tanh ? 1.0 - activated * activated : 1.0;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// index helpers for the 2x2 filter banks: w[out][in][di][dj]
inline std::size_t widx(int out, int in, int di, int dj, int n_in) {
  return ((static_cast<std::size_t>(out) * n_in + in) * 2 + di) * 2 + dj;
}

struct ForwardCache {
  std::vector<double> a1;      // H/2 x W/2 x hidden, activated
  ContinuousGrid encoded;      // h x w x D
  LatentGrid latent;           // h x w
  ContinuousGrid quantized;    // h x w x D (or encoded copy in Bypass mode)
  std::vector<double> a2;      // H/2 x W/2 x hidden, activated
  std::vector<double> output;  // H x W x C, sigmoid applied
};

void encoder_forward(const QaeModel& m, const Image& x, std::vector<double>& a1,
                     ContinuousGrid& encoded) {
  const QaeConfig& cfg = m.cfg;
  const int H = cfg.image_height, W = cfg.image_width, C = cfg.image_channels;
  const int C1 = cfg.hidden_channels, D = cfg.embed_dim;
  const int H1 = H / 2, W1 = W / 2;
  const int gh = cfg.grid_height(), gw = cfg.grid_width();

  a1.assign(static_cast<std::size_t>(H1) * W1 * C1, 0.0);
  for (int i = 0; i < H1; ++i)
    for (int j = 0; j < W1; ++j)
      for (int k = 0; k < C1; ++k) {
        double acc = m.enc_b1[static_cast<std::size_t>(k)];
        for (int c = 0; c < C; ++c)
          for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj)
              acc += m.enc_w1[widx(k, c, di, dj, C)] * x.at(2 * i + di, 2 * j + dj, c);
        a1[(static_cast<std::size_t>(i) * W1 + j) * C1 + k] =
            activate(cfg.activation, acc);
      }

  encoded = ContinuousGrid(gh, gw, D);
  for (int g = 0; g < gh; ++g)
    for (int h = 0; h < gw; ++h)
      for (int d = 0; d < D; ++d) {
        double acc = m.enc_b2[static_cast<std::size_t>(d)];
        for (int k = 0; k < C1; ++k)
          for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj)
              acc += m.enc_w2[widx(d, k, di, dj, C1)] *
                     a1[(static_cast<std::size_t>(2 * g + di) * W1 + (2 * h + dj)) * C1 + k];
        encoded.at(g, h, d) = acc;
      }
}

void decoder_forward(const QaeModel& m, const ContinuousGrid& q, std::vector<double>& a2,
                     std::vector<double>& output) {
  const QaeConfig& cfg = m.cfg;
  const int H = cfg.image_height, W = cfg.image_width, C = cfg.image_channels;
  const int C1 = cfg.hidden_channels, D = cfg.embed_dim;
  const int H1 = H / 2, W1 = W / 2;
  const int gh = cfg.grid_height(), gw = cfg.grid_width();

  a2.assign(static_cast<std::size_t>(H1) * W1 * C1, 0.0);
  for (int g = 0; g < gh; ++g)
    for (int h = 0; h < gw; ++h)
      for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj)
          for (int k = 0; k < C1; ++k) {
            double acc = m.dec_b1[static_cast<std::size_t>(k)];
            for (int d = 0; d < D; ++d)
              acc += m.dec_w1[widx(k, d, di, dj, D)] * q.at(g, h, d);
            a2[(static_cast<std::size_t>(2 * g + di) * W1 + (2 * h + dj)) * C1 + k] =
                activate(cfg.activation, acc);
          }

  output.assign(static_cast<std::size_t>(H) * W * C, 0.0);
  for (int i = 0; i < H1; ++i)
    for (int j = 0; j < W1; ++j)
      for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj)
          for (int c = 0; c < C; ++c) {
            double acc = m.dec_b2[static_cast<std::size_t>(c)];
            for (int k = 0; k < C1; ++k)
              acc += m.dec_w2[widx(c, k, di, dj, C1)] *
                     a2[(static_cast<std::size_t>(i) * W1 + j) * C1 + k];
            output[(static_cast<std::size_t>(2 * i + di) * W + (2 * j + dj)) * C + c] =
                sigmoid(acc);
          }
}

ForwardCache forward(const QaeModel& m, const Image& x, QuantizeMode mode) {
  ForwardCache f;
  encoder_forward(m, x, f.a1, f.encoded);
  if (mode == QuantizeMode::Nearest) {
    auto [latent, q] = quantize(m.codebook, f.encoded);
    f.latent = std::move(latent);
    f.quantized = std::move(q);
  } else {
    f.quantized = f.encoded;
  }
  decoder_forward(m, f.quantized, f.a2, f.output);
  return f;
}

std::vector<std::vector<double>*> param_views(QaeModel& m) {
  return {&m.enc_w1, &m.enc_b1, &m.enc_w2, &m.enc_b2, &m.codebook.v,
          &m.dec_w1, &m.dec_b1, &m.dec_w2, &m.dec_b2};
}

std::vector<const std::vector<double>*> param_views(const QaeModel& m) {
  return {&m.enc_w1, &m.enc_b1, &m.enc_w2, &m.enc_b2, &m.codebook.v,
          &m.dec_w1, &m.dec_b1, &m.dec_w2, &m.dec_b2};
}

std::vector<std::vector<double>*> grad_views(Gradients& g) {
  return {&g.enc_w1, &g.enc_b1, &g.enc_w2, &g.enc_b2, &g.codebook,
          &g.dec_w1, &g.dec_b1, &g.dec_w2, &g.dec_b2};
}

Gradients zero_gradients(const QaeModel& m) {
  Gradients g;
  auto views = grad_views(g);
  auto params = param_views(m);
  for (std::size_t i = 0; i < views.size(); ++i) views[i]->assign(params[i]->size(), 0.0);
  return g;
}

void write_f32_le(std::ostream& out, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  if constexpr (std::endian::native == std::endian::big)
    u = ((u & 0xFF000000u) >> 24) | ((u & 0x00FF0000u) >> 8) | ((u & 0x0000FF00u) << 8) |
        ((u & 0x000000FFu) << 24);
  char buf[4];
  std::memcpy(buf, &u, 4);
  out.write(buf, 4);
}

float read_f32_le(std::istream& in) {
  char buf[4];
  in.read(buf, 4);
  if (!in) throw ParseError("qae checkpoint: truncated parameters");
  std::uint32_t u;
  std::memcpy(&u, buf, 4);
  if constexpr (std::endian::native == std::endian::big)
    u = ((u & 0xFF000000u) >> 24) | ((u & 0x00FF0000u) >> 8) | ((u & 0x0000FF00u) << 8) |
        ((u & 0x000000FFu) << 24);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace

void QaeConfig::validate() const {
  require(image_height >= 4 && image_height % 4 == 0,
          "qae config: image height must be a positive multiple of 4");
  require(image_width >= 4 && image_width % 4 == 0,
          "qae config: image width must be a positive multiple of 4");
  require(image_channels >= 1, "qae config: channels must be >= 1");
  require(hidden_channels >= 1, "qae config: hidden_channels must be >= 1");
  require(embed_dim >= 1, "qae config: embed_dim must be >= 1");
  require(codebook_size >= 2, "qae config: codebook_size must be >= 2");
  require(beta >= 0.0, "qae config: beta must be >= 0");
  require(learning_rate >= 0.0, "qae config: learning_rate must be >= 0");
  require(batch_size >= 1, "qae config: batch_size must be >= 1");
}

QaeModel QaeModel::zero_init(const QaeConfig& cfg) {
  cfg.validate();
  QaeModel m;
  m.cfg = cfg;
  const int C = cfg.image_channels, C1 = cfg.hidden_channels, D = cfg.embed_dim;
  m.enc_w1.assign(static_cast<std::size_t>(C1) * C * 4, 0.0);
  m.enc_b1.assign(static_cast<std::size_t>(C1), 0.0);
  m.enc_w2.assign(static_cast<std::size_t>(D) * C1 * 4, 0.0);
  m.enc_b2.assign(static_cast<std::size_t>(D), 0.0);
  m.codebook = Codebook(cfg.codebook_size, D);
  m.dec_w1.assign(static_cast<std::size_t>(C1) * D * 4, 0.0);
  m.dec_b1.assign(static_cast<std::size_t>(C1), 0.0);
  m.dec_w2.assign(static_cast<std::size_t>(C) * C1 * 4, 0.0);
  m.dec_b2.assign(static_cast<std::size_t>(C), 0.0);
  return m;
}

QaeModel QaeModel::random_init(const QaeConfig& cfg, Rng& rng) {
  QaeModel m = zero_init(cfg);
  const int C = cfg.image_channels, C1 = cfg.hidden_channels, D = cfg.embed_dim;
  auto fill = [&rng](std::vector<double>& w, int fan_in) {
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w) v = rng.uniform(-a, a);
  };
  fill(m.enc_w1, 4 * C);
  fill(m.enc_w2, 4 * C1);
  fill(m.dec_w1, D);
  fill(m.dec_w2, C1);
  const double cb = 1.0 / static_cast<double>(cfg.codebook_size);
  for (double& v : m.codebook.v) v = rng.uniform(-cb, cb);
  return m;
}

ContinuousGrid encode(const QaeModel& model, const Image& image) {
  require(image.height == model.cfg.image_height && image.width == model.cfg.image_width &&
              image.channels == model.cfg.image_channels,
          "encode: image shape does not match model");
  std::vector<double> a1;
  ContinuousGrid encoded;
  encoder_forward(model, image, a1, encoded);
  return encoded;
}

int collapse_unused_codes(QaeModel& model, const ImageBatch& images) {
  require(!images.empty(), "collapse_unused_codes: empty dataset");
  const int K = model.cfg.codebook_size;
  const int D = model.cfg.embed_dim;
  std::vector<bool> used(static_cast<std::size_t>(K), false);
  for (const Image& img : images) {
    const LatentGrid z = encode_latent(model, img);
    for (std::int32_t c : z.idx) used[static_cast<std::size_t>(c)] = true;
  }
  int collapsed = 0;
  for (int k = 0; k < K; ++k) {
    if (used[static_cast<std::size_t>(k)]) continue;
    int nearest = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int u = 0; u < K; ++u) {
      if (!used[static_cast<std::size_t>(u)]) continue;
      double dist = 0.0;
      for (int d = 0; d < D; ++d) {
        const double delta = model.codebook.at(k, d) - model.codebook.at(u, d);
        dist += delta * delta;
      }
      if (dist < best) {
        best = dist;
        nearest = u;
      }
    }
    if (nearest < 0) break;  // nothing used at all
    for (int d = 0; d < D; ++d) model.codebook.at(k, d) = model.codebook.at(nearest, d);
    ++collapsed;
  }
  return collapsed;
}

std::pair<LatentGrid, ContinuousGrid> quantize(const Codebook& codebook,
                                               const ContinuousGrid& grid) {
  require(grid.depth == codebook.dim, "quantize: grid depth does not match codebook");
  LatentGrid latent(grid.height, grid.width);
  ContinuousGrid q(grid.height, grid.width, grid.depth);
  for (int i = 0; i < grid.height; ++i)
    for (int j = 0; j < grid.width; ++j) {
      int best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (int l = 0; l < codebook.size; ++l) {
        double dist = 0.0;
        for (int d = 0; d < grid.depth; ++d) {
          const double delta = grid.at(i, j, d) - codebook.at(l, d);
          dist += delta * delta;
        }
        if (dist < best_dist) {
          best_dist = dist;
          best = l;
        }
      }
      latent.at(i, j) = best;
      for (int d = 0; d < grid.depth; ++d) q.at(i, j, d) = codebook.at(best, d);
    }
  return {std::move(latent), std::move(q)};
}

Image decode(const QaeModel& model, const LatentGrid& latent) {
  const QaeConfig& cfg = model.cfg;
  require(latent.height == cfg.grid_height() && latent.width == cfg.grid_width(),
          "decode: latent shape does not match model");
  for (std::int32_t c : latent.idx)
    require(c >= 0 && c < cfg.codebook_size, "decode: codebook index out of range");
  ContinuousGrid q(latent.height, latent.width, cfg.embed_dim);
  for (int i = 0; i < latent.height; ++i)
    for (int j = 0; j < latent.width; ++j)
      for (int d = 0; d < cfg.embed_dim; ++d)
        q.at(i, j, d) = model.codebook.at(latent.at(i, j), d);
  std::vector<double> a2, output;
  decoder_forward(model, q, a2, output);
  Image img(cfg.image_height, cfg.image_width, cfg.image_channels);
  for (std::size_t p = 0; p < output.size(); ++p)
    img.data[p] = std::clamp(output[p], 0.0, 1.0);
  return img;
}

LatentGrid encode_latent(const QaeModel& model, const Image& image) {
  return quantize(model.codebook, encode(model, image)).first;
}

std::pair<LossBreakdown, Gradients> loss_and_gradients(const QaeModel& model,
                                                       const ImageBatch& batch,
                                                       const std::vector<double>& weights,
                                                       QuantizeMode mode) {
  require(!batch.empty(), "loss: empty batch");
  require(weights.size() == batch.size(), "loss: weights size mismatch");
  double weight_sum = 0.0;
  for (double w : weights) {
    require(w >= 0.0, "loss: negative sample weight");
    weight_sum += w;
  }
  require(weight_sum > 0.0, "loss: all sample weights zero");

  const QaeConfig& cfg = model.cfg;
  const int H = cfg.image_height, W = cfg.image_width, C = cfg.image_channels;
  const int C1 = cfg.hidden_channels, D = cfg.embed_dim;
  const int H1 = H / 2, W1 = W / 2;
  const int gh = cfg.grid_height(), gw = cfg.grid_width();
  const double pixel_count = static_cast<double>(H) * W * C;
  const double cell_count = static_cast<double>(gh) * gw * D;

  LossBreakdown loss;
  Gradients grads = zero_gradients(model);

  std::vector<double> d_a1(static_cast<std::size_t>(H1) * W1 * C1);
  std::vector<double> d_a2(static_cast<std::size_t>(H1) * W1 * C1);
  std::vector<double> d_logits(static_cast<std::size_t>(H) * W * C);
  ContinuousGrid d_encoded;

  for (std::size_t s = 0; s < batch.size(); ++s) {
    const Image& x = batch[s];
    require(x.height == H && x.width == W && x.channels == C,
            "loss: image shape does not match model");
    const double scale = weights[s] / weight_sum;
    ForwardCache f = forward(model, x, mode);

    double recon = 0.0;
    for (std::size_t p = 0; p < f.output.size(); ++p) {
      const double delta = f.output[p] - x.data[p];
      recon += delta * delta;
    }
    recon /= pixel_count;
    loss.reconstruction += scale * recon;

    double cb_term = 0.0, commit_term = 0.0;
    if (mode == QuantizeMode::Nearest) {
      for (int g = 0; g < gh; ++g)
        for (int h = 0; h < gw; ++h)
          for (int d = 0; d < D; ++d) {
            const double delta = f.encoded.at(g, h, d) - f.quantized.at(g, h, d);
            cb_term += delta * delta;
          }
      cb_term /= cell_count;
      commit_term = cb_term;
      loss.codebook += scale * cb_term;
      loss.commitment += scale * commit_term;
    }

    // reconstruction backward: sigmoid output, squared error
    for (std::size_t p = 0; p < f.output.size(); ++p) {
      const double y = f.output[p];
      d_logits[p] = scale * 2.0 * (y - x.data[p]) / pixel_count * y * (1.0 - y);
    }

    std::fill(d_a2.begin(), d_a2.end(), 0.0);
    for (int i = 0; i < H1; ++i)
      for (int j = 0; j < W1; ++j)
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj)
            for (int c = 0; c < C; ++c) {
              const double dl =
                  d_logits[(static_cast<std::size_t>(2 * i + di) * W + (2 * j + dj)) * C +
                           c];
              grads.dec_b2[static_cast<std::size_t>(c)] += dl;
              for (int k = 0; k < C1; ++k) {
                const std::size_t ai = (static_cast<std::size_t>(i) * W1 + j) * C1 + k;
                grads.dec_w2[widx(c, k, di, dj, C1)] += dl * f.a2[ai];
                d_a2[ai] += model.dec_w2[widx(c, k, di, dj, C1)] * dl;
              }
            }

    d_encoded = ContinuousGrid(gh, gw, D);
    for (int g = 0; g < gh; ++g)
      for (int h = 0; h < gw; ++h)
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj)
            for (int k = 0; k < C1; ++k) {
              const std::size_t ai =
                  (static_cast<std::size_t>(2 * g + di) * W1 + (2 * h + dj)) * C1 + k;
              const double dpre = d_a2[ai] * activate_grad(cfg.activation, f.a2[ai]);
              grads.dec_b1[static_cast<std::size_t>(k)] += dpre;
              for (int d = 0; d < D; ++d) {
                grads.dec_w1[widx(k, d, di, dj, D)] += dpre * f.quantized.at(g, h, d);
                // straight-through: decoder input gradient flows to encoder output
                d_encoded.at(g, h, d) += model.dec_w1[widx(k, d, di, dj, D)] * dpre;
              }
            }

    if (mode == QuantizeMode::Nearest) {
      const double cell_scale = scale * 2.0 / cell_count;
      for (int g = 0; g < gh; ++g)
        for (int h = 0; h < gw; ++h) {
          const std::int32_t l = f.latent.at(g, h);
          for (int d = 0; d < D; ++d) {
            const double delta = f.encoded.at(g, h, d) - f.quantized.at(g, h, d);
            // codebook term: pulls the selected vector toward the encoding
            grads.codebook[static_cast<std::size_t>(l) * D + d] -= cell_scale * delta;
            // commitment term: pulls the encoding toward the selected vector
            d_encoded.at(g, h, d) += cfg.beta * cell_scale * delta;
          }
        }
    }

    std::fill(d_a1.begin(), d_a1.end(), 0.0);
    for (int g = 0; g < gh; ++g)
      for (int h = 0; h < gw; ++h)
        for (int d = 0; d < D; ++d) {
          const double de = d_encoded.at(g, h, d);
          grads.enc_b2[static_cast<std::size_t>(d)] += de;
          for (int k = 0; k < C1; ++k)
            for (int di = 0; di < 2; ++di)
              for (int dj = 0; dj < 2; ++dj) {
                const std::size_t ai =
                    (static_cast<std::size_t>(2 * g + di) * W1 + (2 * h + dj)) * C1 + k;
                grads.enc_w2[widx(d, k, di, dj, C1)] += de * f.a1[ai];
                d_a1[ai] += model.enc_w2[widx(d, k, di, dj, C1)] * de;
              }
        }

    for (int i = 0; i < H1; ++i)
      for (int j = 0; j < W1; ++j)
        for (int k = 0; k < C1; ++k) {
          const std::size_t ai = (static_cast<std::size_t>(i) * W1 + j) * C1 + k;
          const double dpre = d_a1[ai] * activate_grad(cfg.activation, f.a1[ai]);
          grads.enc_b1[static_cast<std::size_t>(k)] += dpre;
          for (int c = 0; c < C; ++c)
            for (int di = 0; di < 2; ++di)
              for (int dj = 0; dj < 2; ++dj)
                grads.enc_w1[widx(k, c, di, dj, C)] += dpre * x.at(2 * i + di, 2 * j + dj, c);
        }
  }

  loss.total = loss.reconstruction + loss.codebook + cfg.beta * loss.commitment;
  return {loss, grads};
}

LossBreakdown vq_loss(const QaeModel& model, const ImageBatch& batch) {
  std::vector<double> uniform(batch.size(), 1.0);
  return loss_and_gradients(model, batch, uniform, QuantizeMode::Nearest).first;
}

LossBreakdown train_step(QaeModel& model, const ImageBatch& batch,
                         const std::vector<double>& weights, AdamState& state) {
  auto [loss, grads] = loss_and_gradients(model, batch, weights, QuantizeMode::Nearest);

  auto params = param_views(model);
  auto gviews = grad_views(grads);
  std::size_t total = 0;
  for (const auto* p : params) total += p->size();
  if (state.m.empty()) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
  }
  require(state.m.size() == total, "train_step: adam state size mismatch");

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<double>& p = *params[i];
    const std::vector<double>& g = *gviews[i];
    for (std::size_t n = 0; n < p.size(); ++n) {
      double& mo = state.m[offset + n];
      double& vo = state.v[offset + n];
      mo = kBeta1 * mo + (1.0 - kBeta1) * g[n];
      vo = kBeta2 * vo + (1.0 - kBeta2) * g[n] * g[n];
      p[n] -= model.cfg.learning_rate * (mo / bc1) / (std::sqrt(vo / bc2) + kEps);
    }
    offset += p.size();
  }
  return loss;
}

LossBreakdown train_step(QaeModel& model, const ImageBatch& batch,
                         const std::vector<double>& weights) {
  AdamState state;
  return train_step(model, batch, weights, state);
}

std::vector<LossBreakdown> fit_weighted(QaeModel& model, const ImageBatch& images,
                                        const std::vector<double>& weights, int epochs,
                                        Rng& rng) {
  require(!images.empty(), "fit_weighted: empty dataset");
  require(weights.size() == images.size(), "fit_weighted: weights size mismatch");
  require(epochs >= 0, "fit_weighted: negative epochs");
  double sum = 0.0;
  for (double w : weights) {
    require(w >= 0.0, "fit_weighted: negative weight");
    sum += w;
  }
  require(std::abs(sum - 1.0) <= 1e-9, "fit_weighted: weights must be normalized");

  const int batch_size = model.cfg.batch_size;
  const std::size_t steps =
      (images.size() + static_cast<std::size_t>(batch_size) - 1) /
      static_cast<std::size_t>(batch_size);
  const std::vector<double> batch_uniform(static_cast<std::size_t>(batch_size), 1.0);

  AdamState state;
  std::vector<LossBreakdown> history;
  history.reserve(static_cast<std::size_t>(epochs));
  ImageBatch batch(static_cast<std::size_t>(batch_size));
  for (int e = 0; e < epochs; ++e) {
    LossBreakdown epoch_mean;
    for (std::size_t s = 0; s < steps; ++s) {
      for (int b = 0; b < batch_size; ++b)
        batch[static_cast<std::size_t>(b)] = images[rng.weighted_index(weights)];
      LossBreakdown l = train_step(model, batch, batch_uniform, state);
      epoch_mean.reconstruction += l.reconstruction;
      epoch_mean.codebook += l.codebook;
      epoch_mean.commitment += l.commitment;
      epoch_mean.total += l.total;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    epoch_mean.reconstruction *= inv;
    epoch_mean.codebook *= inv;
    epoch_mean.commitment *= inv;
    epoch_mean.total *= inv;
    history.push_back(epoch_mean);
  }
  return history;
}

void save_checkpoint(std::ostream& out, const QaeModel& model) {
  const QaeConfig& cfg = model.cfg;
  out << "TREELSO-QAE v1\n";
  out << "image " << cfg.image_height << ' ' << cfg.image_width << ' ' << cfg.image_channels
      << '\n';
  out << "grid " << cfg.grid_height() << ' ' << cfg.grid_width() << '\n';
  out << "hidden " << cfg.hidden_channels << '\n';
  out << "codebook " << cfg.codebook_size << ' ' << cfg.embed_dim << '\n';
  char beta[32];
  std::snprintf(beta, sizeof beta, "%.17g", cfg.beta);
  out << "beta " << beta << '\n';
  char lr[32];
  std::snprintf(lr, sizeof lr, "%.17g", cfg.learning_rate);
  out << "lr " << lr << '\n';
  out << "batch_size " << cfg.batch_size << '\n';
  out << "activation " << (cfg.activation == Activation::Tanh ? "tanh" : "identity")
      << '\n';
  auto params = param_views(model);
  std::size_t total = 0;
  for (const auto* p : params) total += p->size();
  out << "params " << total << '\n';
  for (const auto* p : params)
    for (double v : *p) write_f32_le(out, static_cast<float>(v));
  if (!out) throw IoError("qae checkpoint: write failed");
}

void save_checkpoint(const std::string& path, const QaeModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  save_checkpoint(out, model);
}

QaeModel load_checkpoint(std::istream& in) {
  std::string magic;
  std::getline(in, magic);
  if (magic != "TREELSO-QAE v1") throw ParseError("qae checkpoint: bad magic line");
  QaeConfig cfg;
  std::string key;
  int grid_h = 0, grid_w = 0;
  std::size_t total = 0;
  std::string activation;
  if (!(in >> key >> cfg.image_height >> cfg.image_width >> cfg.image_channels) ||
      key != "image")
    throw ParseError("qae checkpoint: expected image line");
  if (!(in >> key >> grid_h >> grid_w) || key != "grid")
    throw ParseError("qae checkpoint: expected grid line");
  if (!(in >> key >> cfg.hidden_channels) || key != "hidden")
    throw ParseError("qae checkpoint: expected hidden line");
  if (!(in >> key >> cfg.codebook_size >> cfg.embed_dim) || key != "codebook")
    throw ParseError("qae checkpoint: expected codebook line");
  if (!(in >> key >> cfg.beta) || key != "beta")
    throw ParseError("qae checkpoint: expected beta line");
  if (!(in >> key >> cfg.learning_rate) || key != "lr")
    throw ParseError("qae checkpoint: expected lr line");
  if (!(in >> key >> cfg.batch_size) || key != "batch_size")
    throw ParseError("qae checkpoint: expected batch_size line");
  if (!(in >> key >> activation) || key != "activation")
    throw ParseError("qae checkpoint: expected activation line");
  if (activation == "tanh")
    cfg.activation = Activation::Tanh;
  else if (activation == "identity")
    cfg.activation = Activation::Identity;
  else
    throw ParseError("qae checkpoint: unknown activation '" + activation + "'");
  if (!(in >> key >> total) || key != "params")
    throw ParseError("qae checkpoint: expected params line");
  if (grid_h != cfg.grid_height() || grid_w != cfg.grid_width())
    throw ParseError("qae checkpoint: grid does not match image shape");
  in.get();  // newline before binary payload

  QaeModel model = QaeModel::zero_init(cfg);
  auto params = param_views(model);
  std::size_t expected = 0;
  for (const auto* p : params) expected += p->size();
  if (expected != total) throw ParseError("qae checkpoint: parameter count mismatch");
  for (auto* p : params)
    for (double& v : *p) v = static_cast<double>(read_f32_le(in));
  return model;
}

QaeModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return load_checkpoint(in);
}

}  // namespace treelso::qae

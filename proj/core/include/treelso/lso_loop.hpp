#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "treelso/gbt.hpp"
#include "treelso/image.hpp"
#include "treelso/qae.hpp"
#include "treelso/rng.hpp"
#include "treelso/tree_opt.hpp"

namespace treelso::lso {

// Images paired with black-box scores and normalized sampling weights.
struct WeightedDataset {
  ImageBatch images;
  std::vector<double> scores;
  std::vector<double> weights;
  double weight_k = 1e-3;

  std::size_t size() const { return images.size(); }
  void add(Image image, double score);
  // Recomputes rank-based weights from the current scores.
  void reweight();
  void validate() const;
};

enum class AnchorSampling { Uniform, Weighted };

struct LsoConfig {
  int query_budget = 500;
  int retrain_every = 5;        // r
  int free_variables = 8;       // t
  double weight_k = 1e-3;       // rank-weight hyperparameter
  int finetune_epochs = 1;      // per retrain event
  bool weighted_retraining = true;
  AnchorSampling anchor_sampling = AnchorSampling::Uniform;
  std::uint64_t seed = 0;

  void validate(int num_latents) const;
};

// One LSO iteration: proposal, decoded image, true score, surrogate value.
struct QueryRecord {
  int iteration = 0;
  qae::LatentGrid proposal;
  Image decoded;
  double f_value = 0.0;
  double surrogate_value = 0.0;
  std::size_t anchor_index = 0;
  std::vector<int> free_variable_indices;
};

struct Trajectory {
  std::vector<QueryRecord> records;
  std::vector<std::optional<double>> top10;  // per iteration, empty while m < k
  std::vector<std::optional<double>> top50;
  std::vector<int> retrain_iterations;
};

// w_i proportional to 1/(k*N + rank_i) where rank_i counts strictly greater
// scores (ties share the smallest rank); normalized to sum to 1.
std::vector<double> rank_weights(const std::vector<double>& scores, double k);

// Indices of the t largest importances, ties to the lowest index, ascending.
std::vector<int> select_free_variables(const std::vector<double>& importances, int t);

// k-th largest f_value among queries 1..m for each m; empty while m < k.
std::vector<std::optional<double>> topk_curve(const std::vector<double>& f_values,
                                              std::size_t k);

using ScoreFunction = std::function<double(const Image&)>;

struct LsoState {
  LsoConfig config;
  gbt::GbtConfig gbt_config;
  ScoreFunction score;
  qae::QaeModel model;
  WeightedDataset dataset;              // the training pool X
  gbt::CategoricalDataset surrogate_data;  // latent rows + f targets
  gbt::TreeEnsemble surrogate;
  Rng rng{0};
  std::vector<QueryRecord> pending;  // queries since the last retrain event
  int iteration = 0;

  static LsoState initialize(const LsoConfig& cfg, const gbt::GbtConfig& gbt_cfg,
                             ScoreFunction score, WeightedDataset dataset,
                             qae::QaeModel model);
};

// Called with the proposal-time surrogate and box after each query is scored
// but before the surrogate refits; return false to stop the run early.
using ProposalObserver = std::function<bool(
    int iteration, const gbt::TreeEnsemble& surrogate, const treeopt::VariableDomain& box,
    const QueryRecord& record)>;

// Draws an anchor, fixes all but the most important latents to it, solves the
// surrogate exactly over the free box, decodes and scores the proposal, then
// appends the pair to the surrogate data and refits.
QueryRecord lso_iteration(LsoState& state);
QueryRecord lso_iteration(LsoState& state, const ProposalObserver& observer,
                          bool* stopped);

// Full optimization loop with periodic weighted retraining every r
// iterations: queried images join the dataset, weights are recomputed,
// the autoencoder is fine-tuned, latents are re-encoded and the surrogate is
// refit from scratch.
Trajectory run(LsoState& state, const ProposalObserver& observer = nullptr);

// Trajectory CSV: iter,f_value,surrogate_value,top10,top50 with empty cells
// where the Top-k series is undefined.
std::string trajectory_csv(const Trajectory& traj);
Trajectory trajectory_from_csv(const std::string& text);

}  // namespace treelso::lso

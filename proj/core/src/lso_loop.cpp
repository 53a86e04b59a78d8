#include "treelso/lso_loop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <queue>
#include <sstream>

namespace treelso::lso {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

gbt::CategoricalDataset encode_dataset(const qae::QaeModel& model,
                                       const WeightedDataset& data) {
  const int n_latents = model.cfg.grid_height() * model.cfg.grid_width();
  gbt::CategoricalDataset out;
  out.domain_sizes.assign(static_cast<std::size_t>(n_latents), model.cfg.codebook_size);
  for (std::size_t i = 0; i < data.size(); ++i) {
    qae::LatentGrid z = qae::encode_latent(model, data.images[i]);
    out.add_row(z.flatten(), data.scores[i]);
  }
  return out;
}

}  // namespace

void WeightedDataset::add(Image image, double score) {
  images.push_back(std::move(image));
  scores.push_back(score);
  weights.push_back(0.0);
}

void WeightedDataset::reweight() { weights = rank_weights(scores, weight_k); }

void WeightedDataset::validate() const {
  require(images.size() == scores.size() && images.size() == weights.size(),
          "weighted dataset: size mismatch");
  require(!images.empty(), "weighted dataset: empty");
  double sum = 0.0;
  for (double w : weights) {
    require(w >= 0.0, "weighted dataset: negative weight");
    sum += w;
  }
  require(std::abs(sum - 1.0) <= 1e-12, "weighted dataset: weights must sum to 1");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  for (std::size_t i = 0; i + 1 < order.size(); ++i)
    if (scores[order[i]] > scores[order[i + 1]])
      require(weights[order[i]] >= weights[order[i + 1]],
              "weighted dataset: weights must be non-increasing in score rank");
}

void LsoConfig::validate(int num_latents) const {
  require(query_budget >= 0, "lso config: negative budget");
  require(retrain_every >= 1, "lso config: retrain_every must be >= 1");
  require(free_variables >= 1 && free_variables <= num_latents,
          "lso config: free_variables must be in [1, num_latents]");
  require(weight_k > 0.0, "lso config: weight_k must be positive");
  require(finetune_epochs >= 0, "lso config: negative finetune_epochs");
}

std::vector<double> rank_weights(const std::vector<double>& scores, double k) {
  require(!scores.empty(), "rank_weights: empty scores");
  require(k > 0.0, "rank_weights: k must be positive");
  for (double s : scores)
    require(std::isfinite(s), "rank_weights: non-finite score");

  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  // rank = number of strictly greater scores; ties share the group rank
  std::vector<double> weights(n, 0.0);
  const double kn = k * static_cast<double>(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double w = 1.0 / (kn + static_cast<double>(i));
    for (std::size_t q = i; q < j; ++q) weights[order[q]] = w;
    i = j;
  }
  double total = 0.0;
  for (double w : weights) total += w;
  for (double& w : weights) w /= total;
  return weights;
}

std::vector<int> select_free_variables(const std::vector<double>& importances, int t) {
  require(t >= 0, "select_free_variables: negative t");
  require(static_cast<std::size_t>(t) <= importances.size(),
          "select_free_variables: t exceeds number of variables");
  std::vector<int> order(importances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double ia = importances[static_cast<std::size_t>(a)];
    const double ib = importances[static_cast<std::size_t>(b)];
    if (ia != ib) return ia > ib;
    return a < b;
  });
  std::vector<int> selected(order.begin(), order.begin() + t);
  std::sort(selected.begin(), selected.end());
  return selected;
}

std::vector<std::optional<double>> topk_curve(const std::vector<double>& f_values,
                                              std::size_t k) {
  require(k >= 1, "topk_curve: k must be >= 1");
  std::vector<std::optional<double>> series;
  series.reserve(f_values.size());
  std::priority_queue<double, std::vector<double>, std::greater<>> best_k;
  for (double f : f_values) {
    best_k.push(f);
    if (best_k.size() > k) best_k.pop();
    if (best_k.size() == k)
      series.emplace_back(best_k.top());
    else
      series.emplace_back(std::nullopt);
  }
  return series;
}

LsoState LsoState::initialize(const LsoConfig& cfg, const gbt::GbtConfig& gbt_cfg,
                              ScoreFunction score, WeightedDataset dataset,
                              qae::QaeModel model) {
  const int n_latents = model.cfg.grid_height() * model.cfg.grid_width();
  cfg.validate(n_latents);
  gbt_cfg.validate();
  dataset.validate();
  require(static_cast<bool>(score), "lso: score function required");

  LsoState state;
  state.config = cfg;
  state.gbt_config = gbt_cfg;
  state.score = std::move(score);
  state.model = std::move(model);
  state.dataset = std::move(dataset);
  state.dataset.weight_k = cfg.weight_k;
  state.rng = Rng(cfg.seed);
  state.surrogate_data = encode_dataset(state.model, state.dataset);
  state.surrogate = gbt::fit(state.surrogate_data, gbt_cfg);
  return state;
}

QueryRecord lso_iteration(LsoState& state, const ProposalObserver& observer,
                          bool* stopped) {
  const int n_latents = state.model.cfg.grid_height() * state.model.cfg.grid_width();

  // anchor draw
  std::size_t anchor = 0;
  if (state.config.anchor_sampling == AnchorSampling::Weighted)
    anchor = state.rng.weighted_index(state.dataset.weights);
  else
    anchor = state.rng.index(state.dataset.size());
  const qae::LatentGrid anchor_latent =
      qae::encode_latent(state.model, state.dataset.images[anchor]);

  // trust region: free the most important latents, pin the rest to the anchor
  const std::vector<double> importances = gbt::feature_importances(state.surrogate);
  const std::vector<int> free_vars =
      select_free_variables(importances, state.config.free_variables);

  treeopt::VariableDomain box = treeopt::VariableDomain::all_free(
      std::vector<int>(static_cast<std::size_t>(n_latents), state.model.cfg.codebook_size));
  std::vector<bool> is_free(static_cast<std::size_t>(n_latents), false);
  for (int v : free_vars) is_free[static_cast<std::size_t>(v)] = true;
  for (int v = 0; v < n_latents; ++v)
    if (!is_free[static_cast<std::size_t>(v)])
      box.fix(static_cast<std::size_t>(v), anchor_latent.flatten()[static_cast<std::size_t>(v)]);

  const treeopt::MaximizeResult solution = treeopt::maximize(state.surrogate, box);

  QueryRecord rec;
  rec.iteration = state.iteration + 1;
  rec.proposal = qae::LatentGrid(state.model.cfg.grid_height(), state.model.cfg.grid_width());
  rec.proposal.idx = solution.assignment;
  rec.decoded = qae::decode(state.model, rec.proposal);
  rec.f_value = state.score(rec.decoded);
  rec.surrogate_value = solution.value;
  rec.anchor_index = anchor;
  rec.free_variable_indices = free_vars;

  if (observer && !observer(rec.iteration, state.surrogate, box, rec)) {
    if (stopped) *stopped = true;
    return rec;
  }

  state.surrogate_data.add_row(solution.assignment, rec.f_value);
  state.surrogate = gbt::fit(state.surrogate_data, state.gbt_config);
  state.iteration = rec.iteration;
  state.pending.push_back(rec);
  return rec;
}

QueryRecord lso_iteration(LsoState& state) { return lso_iteration(state, nullptr, nullptr); }

Trajectory run(LsoState& state, const ProposalObserver& observer) {
  Trajectory traj;
  std::vector<double> f_values;

  for (int iter = 1; iter <= state.config.query_budget; ++iter) {
    bool stopped = false;
    QueryRecord rec = lso_iteration(state, observer, &stopped);
    if (stopped) break;
    f_values.push_back(rec.f_value);
    traj.records.push_back(std::move(rec));

    if (iter % state.config.retrain_every == 0 && state.config.weighted_retraining) {
      for (QueryRecord& p : state.pending)
        state.dataset.add(std::move(p.decoded), p.f_value);
      state.pending.clear();
      state.dataset.weight_k = state.config.weight_k;
      state.dataset.reweight();
      Rng finetune_rng = state.rng.derive(static_cast<std::uint64_t>(iter));
      qae::fit_weighted(state.model, state.dataset.images, state.dataset.weights,
                        state.config.finetune_epochs, finetune_rng);
      // the encoder moved: refresh every latent row and refit from scratch
      state.surrogate_data = encode_dataset(state.model, state.dataset);
      state.surrogate = gbt::fit(state.surrogate_data, state.gbt_config);
      traj.retrain_iterations.push_back(iter);
    }
  }

  // queries still buffered join the pool so the final dataset reflects the
  // whole run even when the budget is not a multiple of r
  if (!state.pending.empty()) {
    for (QueryRecord& p : state.pending) state.dataset.add(std::move(p.decoded), p.f_value);
    state.pending.clear();
    state.dataset.weight_k = state.config.weight_k;
    state.dataset.reweight();
  }

  traj.top10 = topk_curve(f_values, 10);
  traj.top50 = topk_curve(f_values, 50);
  return traj;
}

std::string trajectory_csv(const Trajectory& traj) {
  std::ostringstream out;
  out << "iter,f_value,surrogate_value,top10,top50\n";
  for (std::size_t i = 0; i < traj.records.size(); ++i) {
    const QueryRecord& rec = traj.records[i];
    out << rec.iteration << ',' << fmt_double(rec.f_value) << ','
        << fmt_double(rec.surrogate_value) << ',';
    if (i < traj.top10.size() && traj.top10[i]) out << fmt_double(*traj.top10[i]);
    out << ',';
    if (i < traj.top50.size() && traj.top50[i]) out << fmt_double(*traj.top50[i]);
    out << '\n';
  }
  return out.str();
}

Trajectory trajectory_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "iter,f_value,surrogate_value,top10,top50")
    throw ParseError("trajectory csv: bad header");
  Trajectory traj;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t p = 0; p <= line.size(); ++p) {
      if (p == line.size() || line[p] == ',') {
        cells.push_back(line.substr(start, p - start));
        start = p + 1;
      }
    }
    if (cells.size() != 5) throw ParseError("trajectory csv: bad row");
    try {
      QueryRecord rec;
      rec.iteration = std::stoi(cells[0]);
      rec.f_value = std::stod(cells[1]);
      rec.surrogate_value = std::stod(cells[2]);
      traj.records.push_back(std::move(rec));
      traj.top10.push_back(cells[3].empty()
                               ? std::optional<double>{}
                               : std::optional<double>{std::stod(cells[3])});
      traj.top50.push_back(cells[4].empty()
                               ? std::optional<double>{}
                               : std::optional<double>{std::stod(cells[4])});
    } catch (const std::logic_error&) {
      throw ParseError("trajectory csv: bad numeric cell");
    }
  }
  return traj;
}

}  // namespace treelso::lso

// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Heavier end-to-end checks live here rather than in the
// unit tests; run through ctest (`ctest -R acceptance`) or directly.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "treelso/face_task.hpp"
#include "treelso/frechet.hpp"
#include "treelso/gbt.hpp"
#include "treelso/image.hpp"
#include "treelso/lso_loop.hpp"
#include "treelso/qae.hpp"
#include "treelso/rng.hpp"
#include "treelso/tree_opt.hpp"

using namespace treelso;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// random instance generators (independent of the fitting path)
// ---------------------------------------------------------------------------

double random_leaf_value(Rng& rng) {
  if (rng.uniform01() < 0.5)
    return -1.0 + 0.5 * static_cast<double>(rng.index(5));
  return rng.uniform(-2.0, 2.0);
}

std::vector<std::int32_t> random_subset(Rng& rng, int domain, bool strict) {
  while (true) {
    std::vector<std::int32_t> cats;
    for (int c = 0; c < domain; ++c)
      if (rng.uniform01() < 0.5) cats.push_back(c);
    if (cats.empty()) continue;
    if (strict && static_cast<int>(cats.size()) == domain) continue;
    return cats;
  }
}

gbt::TreeEnsemble random_ensemble(Rng& rng, std::size_t n_features, int domain,
                                  std::size_t max_trees) {
  gbt::TreeEnsemble m;
  m.domain_sizes.assign(n_features, domain);
  m.base_score = rng.uniform(-1.0, 1.0);
  const std::size_t n_trees = rng.index(max_trees + 1);
  for (std::size_t t = 0; t < n_trees; ++t) {
    gbt::Tree tree;
    tree.nodes.resize(1);
    if (rng.uniform01() < 0.1) {
      tree.nodes[0].value = random_leaf_value(rng);
      m.trees.push_back(std::move(tree));
      continue;
    }
    tree.nodes[0].feature = static_cast<int>(rng.index(n_features));
    tree.nodes[0].left_categories = random_subset(rng, domain, true);
    tree.nodes[0].left = 1;
    tree.nodes[0].right = 2;
    tree.nodes.resize(3);
    for (int child : {1, 2}) {
      auto& node = tree.nodes[static_cast<std::size_t>(child)];
      if (rng.uniform01() < 0.5) {
        node.feature = static_cast<int>(rng.index(n_features));
        node.left_categories = random_subset(rng, domain, true);
        node.left = static_cast<int>(tree.nodes.size());
        node.right = static_cast<int>(tree.nodes.size() + 1);
        tree.nodes.resize(tree.nodes.size() + 2);
        tree.nodes[static_cast<std::size_t>(node.left)].value = random_leaf_value(rng);
        tree.nodes[static_cast<std::size_t>(node.right)].value = random_leaf_value(rng);
      } else {
        node.value = random_leaf_value(rng);
      }
    }
    m.trees.push_back(std::move(tree));
  }
  return m;
}

treeopt::VariableDomain random_domain(Rng& rng, const gbt::TreeEnsemble& m,
                                      std::size_t max_free) {
  treeopt::VariableDomain dom = treeopt::VariableDomain::all_free(m.domain_sizes);
  std::vector<std::size_t> order(m.num_features());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  for (std::size_t j = order.size(); j > 1; --j)
    std::swap(order[j - 1], order[rng.index(j)]);
  const std::size_t n_free = rng.index(max_free + 1);
  for (std::size_t j = 0; j < order.size(); ++j) {
    const int domain = m.domain_sizes[order[j]];
    if (j < n_free) {
      if (rng.uniform01() < 0.5)
        dom.restrict_to(order[j], random_subset(rng, domain, false));
    } else {
      dom.fix(order[j],
              static_cast<std::int32_t>(rng.index(static_cast<std::size_t>(domain))));
    }
  }
  return dom;
}

double eval_lp_objective(const std::string& lp_text,
                         const std::vector<std::pair<std::string, int>>& solution,
                         bool& ok) {
  const std::size_t begin = lp_text.find("Maximize\n");
  const std::size_t end = lp_text.find("Subject To", begin);
  if (begin == std::string::npos || end == std::string::npos) {
    ok = false;
    return 0.0;
  }
  std::string section = lp_text.substr(begin + 9, end - begin - 9);
  section = section.substr(section.find(':') + 1);
  std::istringstream in(section);
  std::vector<std::string> tokens;
  std::string tok;
  while (in >> tok) tokens.push_back(tok);

  auto value_of = [&](const std::string& name) -> int {
    for (const auto& [n, v] : solution)
      if (n == name) return v;
    ok = false;
    return 0;
  };

  double acc = 0.0;
  double sign = 1.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == "+") {
      sign = 1.0;
      continue;
    }
    if (tokens[i] == "-") {
      sign = -1.0;
      continue;
    }
    const double number = std::stod(tokens[i]);
    if (i + 1 < tokens.size() &&
        (std::isalpha(static_cast<unsigned char>(tokens[i + 1][0])) ||
         tokens[i + 1][0] == '_')) {
      acc += sign * number * value_of(tokens[i + 1]);
      ++i;
    } else {
      acc += sign * number;
    }
    sign = 1.0;
  }
  return acc;
}

int route_leaf(const gbt::Tree& tree, const std::vector<std::int32_t>& x) {
  int id = 0;
  while (!tree.nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const auto& node = tree.nodes[static_cast<std::size_t>(id)];
    const bool left =
        std::binary_search(node.left_categories.begin(), node.left_categories.end(),
                           x[static_cast<std::size_t>(node.feature)]);
    id = left ? node.left : node.right;
  }
  return id;
}

// ---------------------------------------------------------------------------
// desk-scale experiment shared by criteria 8 and 9
// ---------------------------------------------------------------------------

struct DeskSetup {
  lso::WeightedDataset dataset;
  qae::QaeModel model;
  double train_max = 0.0;
};

qae::QaeConfig desk_qae_config() {
  qae::QaeConfig cfg;
  cfg.image_height = 16;
  cfg.image_width = 16;
  cfg.image_channels = 1;
  cfg.hidden_channels = 16;
  cfg.embed_dim = 8;
  cfg.codebook_size = 16;
  cfg.beta = 0.25;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 16;
  return cfg;
}

gbt::GbtConfig desk_gbt_config() {
  gbt::GbtConfig cfg;  // paper-scale defaults
  return cfg;
}

const DeskSetup& desk_setup() {
  static const DeskSetup setup = [] {
    DeskSetup s;
    s.dataset = faces::make_dataset(500, 2.0, 20250101);
    s.train_max = *std::max_element(s.dataset.scores.begin(), s.dataset.scores.end());
    Rng rng(31337);
    s.model = qae::QaeModel::random_init(desk_qae_config(), rng);
    Rng train = rng.derive(1);
    qae::fit_weighted(s.model, s.dataset.images, s.dataset.weights, 300, train);
    qae::collapse_unused_codes(s.model, s.dataset.images);
    return s;
  }();
  return setup;
}

struct DeskRun {
  double final_top10 = 0.0;
  double final_top50 = 0.0;
  ImageBatch queries;
};

DeskRun desk_run(std::uint64_t seed, int budget, int free_vars, bool weighted_retraining) {
  const DeskSetup& setup = desk_setup();
  lso::LsoConfig cfg;
  cfg.query_budget = budget;
  cfg.retrain_every = 5;
  cfg.free_variables = free_vars;
  cfg.weight_k = 1e-3;
  cfg.finetune_epochs = 1;
  cfg.weighted_retraining = weighted_retraining;
  cfg.seed = seed;
  lso::LsoState state = lso::LsoState::initialize(cfg, desk_gbt_config(), faces::score,
                                                  setup.dataset, setup.model);
  const lso::Trajectory traj = lso::run(state);
  DeskRun out;
  out.final_top10 = traj.top10.back().value_or(-1.0);
  out.final_top50 = traj.top50.back().value_or(-1.0);
  for (const auto& rec : traj.records) out.queries.push_back(rec.decoded);
  return out;
}

std::vector<DeskRun> desk_runs(const std::vector<std::uint64_t>& seeds, int budget,
                               int free_vars, bool weighted) {
  std::vector<DeskRun> runs(seeds.size());
  const unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      runs[i] = desk_run(seeds[i], budget, free_vars, weighted);
    }
  };
  std::vector<std::future<void>> pool;
  for (unsigned j = 0; j < std::min<unsigned>(jobs, static_cast<unsigned>(seeds.size()));
       ++j)
    pool.push_back(std::async(std::launch::async, worker));
  for (auto& f : pool) f.get();
  return runs;
}

const std::vector<std::uint64_t>& desk_seeds() {
  static const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  return seeds;
}

struct WeightedArmCache {
  std::vector<DeskRun> runs;
  double elapsed_seconds = 0.0;
};

const WeightedArmCache& weighted_arm() {
  static const WeightedArmCache cache = [] {
    WeightedArmCache c;
    const auto start = Clock::now();
    (void)desk_setup();  // include pretraining in the measured budget
    c.runs = desk_runs(desk_seeds(), 200, 4, true);
    c.elapsed_seconds = seconds_since(start);
    return c;
  }();
  return cache;
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

bool criterion_solver_exactness(std::string& detail) {
  const auto start = Clock::now();
  Rng rng(4001);
  int instances = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const gbt::TreeEnsemble m = random_ensemble(rng, 6, 8, 20);
    const treeopt::VariableDomain dom = random_domain(rng, m, 4);
    const treeopt::MaximizeResult bf = treeopt::brute_force_maximize(m, dom);
    const treeopt::MaximizeResult bb = treeopt::maximize(m, dom);
    ++instances;
    if (bb.value != bf.value) {
      detail = "value mismatch on instance " + std::to_string(trial);
      return false;
    }
    if (gbt::predict(m, bb.assignment) != bb.value) {
      detail = "argmax does not attain the reported value";
      return false;
    }
    for (std::size_t j = 0; j < m.num_features(); ++j)
      if (!dom.allowed(j).contains(bb.assignment[j])) {
        detail = "infeasible assignment returned";
        return false;
      }
  }
  const double elapsed = seconds_since(start);
  detail = std::to_string(instances) + " instances exact in " + std::to_string(elapsed) +
           " s";
  return elapsed < 10.0;
}

bool criterion_encoding_soundness(std::string& detail) {
  Rng rng(4002);
  int checks = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const gbt::TreeEnsemble m = random_ensemble(rng, 5, 6, 15);
    const treeopt::VariableDomain dom = random_domain(rng, m, 3);
    const std::string lp = treeopt::encode_mio(m, dom);
    for (int draw = 0; draw < 50; ++draw) {
      std::vector<std::int32_t> x(m.num_features());
      for (std::size_t j = 0; j < x.size(); ++j) {
        const std::vector<std::int32_t> allowed = dom.allowed(j).to_vector();
        x[j] = allowed[rng.index(allowed.size())];
      }
      std::vector<std::pair<std::string, int>> solution;
      for (std::size_t j = 0; j < x.size(); ++j) {
        if (dom.is_fixed(j)) continue;
        for (std::int32_t c : dom.allowed(j).to_vector())
          solution.push_back(
              {"x_" + std::to_string(j) + "_" + std::to_string(c), x[j] == c ? 1 : 0});
      }
      if (dom.num_free() > 0) {
        for (std::size_t t = 0; t < m.trees.size(); ++t) {
          const std::vector<int> reachable = treeopt::reachable_leaves(m.trees[t], dom);
          const int routed = route_leaf(m.trees[t], x);
          for (std::size_t l = 0; l < reachable.size(); ++l)
            solution.push_back({"y_" + std::to_string(t) + "_" + std::to_string(l),
                                reachable[l] == routed ? 1 : 0});
        }
      }
      bool ok = true;
      const double lp_value = eval_lp_objective(lp, solution, ok);
      if (!ok || lp_value != gbt::predict(m, x)) {
        detail = "objective mismatch (instance " + std::to_string(trial) + ")";
        return false;
      }
      ++checks;
    }
  }
  detail = std::to_string(checks) + " induced solutions reproduce predict exactly";
  return true;
}

bool criterion_gbt_contracts(std::string& detail) {
  Rng rng(4003);
  for (int ds = 0; ds < 10; ++ds) {
    gbt::CategoricalDataset data;
    const std::size_t n_features = 3 + rng.index(4);
    const int domain = 3 + static_cast<int>(rng.index(6));
    data.domain_sizes.assign(n_features, domain);
    const std::size_t n_rows = 80 + rng.index(80);
    for (std::size_t i = 0; i < n_rows; ++i) {
      std::vector<std::int32_t> row(n_features);
      for (auto& v : row)
        v = static_cast<std::int32_t>(rng.index(static_cast<std::size_t>(domain)));
      data.add_row(std::move(row), rng.uniform(-2.0, 2.0));
    }
    gbt::GbtConfig cfg;
    cfg.n_trees = 60;
    cfg.min_samples_leaf = 8;
    cfg.max_leaves = 4;
    cfg.interaction_depth = 2;
    const gbt::TreeEnsemble m = gbt::fit(data, cfg);

    for (const auto& tree : m.trees) {
      if (tree.leaf_count() > cfg.max_leaves || tree.depth() > cfg.interaction_depth) {
        detail = "structure constraint violated";
        return false;
      }
      for (const auto& node : tree.nodes)
        if (node.is_leaf() && tree.has_split() && node.sample_count < cfg.min_samples_leaf) {
          detail = "min_samples_leaf violated";
          return false;
        }
    }

    double prev = 0.0;
    for (std::size_t i = 0; i < data.num_rows(); ++i) {
      const double d = gbt::predict_prefix(m, data.rows[i], 0) - data.targets[i];
      prev += d * d;
    }
    prev /= static_cast<double>(data.num_rows());
    for (std::size_t t = 1; t <= m.trees.size(); ++t) {
      double mse = 0.0;
      for (std::size_t i = 0; i < data.num_rows(); ++i) {
        const double d = gbt::predict_prefix(m, data.rows[i], t) - data.targets[i];
        mse += d * d;
      }
      mse /= static_cast<double>(data.num_rows());
      if (mse > prev + 1e-12 * std::max(1.0, prev)) {
        detail = "training MSE increased at round " + std::to_string(t);
        return false;
      }
      prev = mse;
    }

    const std::vector<double> imp = gbt::feature_importances(m);
    bool any_split = false;
    for (const auto& tree : m.trees) any_split = any_split || tree.has_split();
    if (any_split) {
      double total = 0.0;
      for (double v : imp) {
        if (v < 0.0) {
          detail = "negative importance";
          return false;
        }
        total += v;
      }
      if (std::abs(total - 1.0) > 1e-9) {
        detail = "importances do not sum to 1";
        return false;
      }
    }
  }
  detail = "structure, staged MSE and importances hold on 10 datasets";
  return true;
}

bool criterion_quantization_and_gradients(std::string& detail) {
  Rng rng(4004);
  qae::Codebook book(24, 6);
  for (double& v : book.v) v = rng.uniform(-1.0, 1.0);
  qae::ContinuousGrid cell(1, 1, 6);
  for (int trial = 0; trial < 10000; ++trial) {
    for (double& v : cell.v) v = rng.uniform(-1.2, 1.2);
    const auto [latent, q] = qae::quantize(book, cell);
    int expect = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int l = 0; l < book.size; ++l) {
      double dist = 0.0;
      for (int d = 0; d < 6; ++d) {
        const double delta = cell.at(0, 0, d) - book.at(l, d);
        dist += delta * delta;
      }
      if (dist < best) {
        best = dist;
        expect = l;
      }
    }
    if (latent.at(0, 0) != expect) {
      detail = "argmin disagrees with the linear scan oracle";
      return false;
    }
  }

  qae::QaeConfig cfg;
  cfg.image_height = 8;
  cfg.image_width = 8;
  cfg.image_channels = 1;
  cfg.hidden_channels = 3;
  cfg.embed_dim = 2;
  cfg.codebook_size = 4;
  qae::QaeModel model = qae::QaeModel::random_init(cfg, rng);
  ImageBatch batch;
  for (int i = 0; i < 2; ++i) {
    Image img(8, 8, 1);
    for (double& v : img.data) v = rng.uniform01();
    batch.push_back(std::move(img));
  }
  const std::vector<double> weights = {0.5, 0.5};
  const qae::Gradients analytic =
      qae::loss_and_gradients(model, batch, weights, qae::QuantizeMode::Bypass).second;
  std::vector<std::vector<double>*> params = {
      &model.enc_w1, &model.enc_b1, &model.enc_w2, &model.enc_b2, &model.codebook.v,
      &model.dec_w1, &model.dec_b1, &model.dec_w2, &model.dec_b2};
  std::vector<const std::vector<double>*> grads = {
      &analytic.enc_w1, &analytic.enc_b1, &analytic.enc_w2, &analytic.enc_b2,
      &analytic.codebook, &analytic.dec_w1, &analytic.dec_b1, &analytic.dec_w2,
      &analytic.dec_b2};
  const double step = 1e-5;
  double max_rel = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p]->size(); ++i) {
      double& v = (*params[p])[i];
      const double saved = v;
      v = saved + step;
      const double up =
          qae::loss_and_gradients(model, batch, weights, qae::QuantizeMode::Bypass)
              .first.total;
      v = saved - step;
      const double down =
          qae::loss_and_gradients(model, batch, weights, qae::QuantizeMode::Bypass)
              .first.total;
      v = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = (*grads[p])[i];
      max_rel = std::max(max_rel, std::abs(a - numeric) /
                                      std::max({std::abs(a), std::abs(numeric), 1e-4}));
    }
  detail = "10^4 cells match the scan oracle; max gradient rel err " +
           std::to_string(max_rel);
  return max_rel < 1e-4;
}

bool criterion_weighting(std::string& detail) {
  Rng rng(4005);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> scores;
    const std::size_t n = 1 + rng.index(300);
    for (std::size_t i = 0; i < n; ++i) scores.push_back(rng.uniform(-4.0, 4.0));
    const std::vector<double> w = lso::rank_weights(scores, 1e-3);
    double sum = 0.0;
    for (double v : w) sum += v;
    if (std::abs(sum - 1.0) > 1e-12) {
      detail = "weights do not sum to 1 within 1e-12";
      return false;
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (scores[i] > scores[j] && w[i] <= w[j]) {
          detail = "weight ordering violates score ordering";
          return false;
        }
  }

  const std::vector<double> w = lso::rank_weights({3.0, 1.0, 2.0}, 1.0);
  if (std::abs(w[0] - 20.0 / 47.0) > 1e-10 || std::abs(w[1] - 12.0 / 47.0) > 1e-10 ||
      std::abs(w[2] - 15.0 / 47.0) > 1e-10) {
    detail = "three-point example does not reproduce to 1e-10";
    return false;
  }
  detail = "normalization, ordering and the closed-form example hold";
  return true;
}

bool criterion_frechet(std::string& detail) {
  auto diag = [](std::vector<double> mean, std::vector<double> var) {
    metrics::GaussianSummary s;
    s.mean = std::move(mean);
    const std::size_t d = s.mean.size();
    s.covariance.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) s.covariance[i * d + i] = var[i];
    return s;
  };
  const metrics::GaussianSummary a = diag({1.0, 0.0, 0.0}, {1.0, 4.0, 9.0});
  const metrics::GaussianSummary b = diag({0.0, 0.0, 0.0}, {1.0, 1.0, 1.0});
  const double identical = metrics::frechet_distance(a, a);
  const double one_d = metrics::frechet_distance(diag({0.0}, {1.0}), diag({1.0}, {1.0}));
  const double diag_3d = metrics::frechet_distance(a, b);
  detail = "identical=" + std::to_string(identical) + " 1d=" + std::to_string(one_d) +
           " 3d=" + std::to_string(diag_3d);
  return std::abs(identical) <= 1e-8 && std::abs(one_d - 1.0) <= 1e-8 &&
         std::abs(diag_3d - 6.0) <= 1e-8;
}

bool criterion_protocol(std::string& detail) {
  qae::QaeConfig qcfg;
  qcfg.image_height = 16;
  qcfg.image_width = 16;
  qcfg.hidden_channels = 8;
  qcfg.embed_dim = 4;
  qcfg.codebook_size = 8;
  gbt::GbtConfig gcfg;
  gcfg.n_trees = 40;
  gcfg.min_samples_leaf = 2;
  lso::LsoConfig cfg;
  cfg.query_budget = 10;
  cfg.retrain_every = 5;
  cfg.free_variables = 4;
  cfg.seed = 77;
  cfg.finetune_epochs = 1;

  auto make_state = [&] {
    Rng rng(123);
    return lso::LsoState::initialize(cfg, gcfg, faces::score,
                                     faces::make_dataset(24, 2.0, 55),
                                     qae::QaeModel::random_init(qcfg, rng));
  };
  lso::LsoState s1 = make_state();
  lso::LsoState s2 = make_state();
  const lso::Trajectory t1 = lso::run(s1);
  const lso::Trajectory t2 = lso::run(s2);

  if (t1.retrain_iterations != std::vector<int>{5, 10}) {
    detail = "expected exactly 2 fine-tune events at iterations 5 and 10";
    return false;
  }
  if (lso::trajectory_csv(t1) != lso::trajectory_csv(t2)) {
    detail = "identical-seed runs are not bit-identical";
    return false;
  }
  std::vector<double> f;
  for (const auto& rec : t1.records) f.push_back(rec.f_value);
  for (std::size_t k : {std::size_t{1}, std::size_t{3}, std::size_t{10}}) {
    const auto series = lso::topk_curve(f, k);
    for (std::size_t m = 1; m < series.size(); ++m)
      if (series[m - 1] && series[m] && *series[m] < *series[m - 1]) {
        detail = "top-k series decreased";
        return false;
      }
  }
  const auto top10 = lso::topk_curve(f, 10);
  const auto top50 = lso::topk_curve(f, 50);
  for (std::size_t m = 0; m < f.size(); ++m)
    if (top10[m] && top50[m] && *top10[m] < *top50[m]) {
      detail = "top10 fell below top50";
      return false;
    }
  detail = "schedule, monotonicity and bit-level determinism hold";
  return true;
}

bool criterion_desk_scale_improvement(std::string& detail) {
  const WeightedArmCache& arm = weighted_arm();
  const double train_max = desk_setup().train_max;
  int above = 0;
  double mean_top50 = 0.0;
  for (const DeskRun& r : arm.runs) {
    if (r.final_top50 > train_max) ++above;
    mean_top50 += r.final_top50;
  }
  mean_top50 /= static_cast<double>(arm.runs.size());
  std::ostringstream ss;
  ss << above << "/10 seeds beat the training max " << train_max << "; mean final top50 "
     << mean_top50 << "; " << arm.elapsed_seconds << " s";
  detail = ss.str();
  return above >= 8 && arm.elapsed_seconds <= 1800.0;
}

bool criterion_weighted_retraining_benefit(std::string& detail) {
  const WeightedArmCache& arm = weighted_arm();
  const std::vector<DeskRun> plain = desk_runs(desk_seeds(), 200, 4, false);
  double mean_weighted = 0.0, mean_plain = 0.0;
  for (std::size_t i = 0; i < plain.size(); ++i) {
    mean_weighted += arm.runs[i].final_top50;
    mean_plain += plain[i].final_top50;
  }
  mean_weighted /= static_cast<double>(plain.size());
  mean_plain /= static_cast<double>(plain.size());
  std::ostringstream ss;
  ss << "mean final top50: weighted " << mean_weighted << " vs plain " << mean_plain
     << " (gap " << (mean_weighted - mean_plain) << ")";
  detail = ss.str();
  return mean_weighted >= mean_plain;
}

bool criterion_ablation_harness(std::string& detail) {
  const char* bin = std::getenv("TREELSO_BIN");
  if (!bin || !*bin) {
    detail = "TREELSO_BIN not set; run through ctest so the t-sweep command can be driven";
    return false;
  }
  const fs::path root = fs::temp_directory_path() / "treelso_acceptance_ablate";
  fs::remove_all(root);
  fs::create_directories(root);

  const DeskSetup& setup = desk_setup();
  write_image_container((root / "images.bin").string(), setup.dataset.images);
  {
    std::ofstream scores(root / "scores.csv");
    scores << "index,score\n";
    for (std::size_t i = 0; i < setup.dataset.scores.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", setup.dataset.scores[i]);
      scores << i << ',' << buf << '\n';
    }
  }
  qae::save_checkpoint((root / "model.qae").string(), setup.model);

  const std::string cmd = std::string(bin) + " ablate --images " +
                          (root / "images.bin").string() + " --scores " +
                          (root / "scores.csv").string() + " --checkpoint " +
                          (root / "model.qae").string() +
                          " --seeds 1..3 --t-list 2,4,8 --budget 60 --out " +
                          (root / "ablation").string() + " >/dev/null 2>&1";
  if (std::system(cmd.c_str()) != 0) {
    detail = "ablate command failed";
    return false;
  }
  std::ifstream table(root / "ablation" / "ablation.csv");
  if (!table) {
    detail = "ablation.csv missing";
    return false;
  }
  std::string line;
  std::getline(table, line);
  if (line != "t,fid_like,top10_mean,top10_std,top50_mean,top50_std") {
    detail = "unexpected table header";
    return false;
  }
  std::vector<int> ts;
  while (std::getline(table, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    ts.push_back(std::stoi(cell));
    for (int c = 0; c < 5; ++c) {
      if (!std::getline(row, cell, ',') && c < 4) {
        detail = "short table row";
        return false;
      }
      if (!cell.empty()) (void)std::stod(cell);  // numeric or empty
    }
  }
  fs::remove_all(root);
  if (ts != std::vector<int>{2, 4, 8}) {
    detail = "table rows are not t = 2, 4, 8";
    return false;
  }
  detail = "t-sweep ran and emitted the fid/top10/top50 table";
  return true;
}

struct Criterion {
  int id;
  const char* name;
  std::function<bool(std::string&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "solver exactness vs brute force", criterion_solver_exactness},
      {2, "LP encoding soundness", criterion_encoding_soundness},
      {3, "GBT structural and staged-MSE contracts", criterion_gbt_contracts},
      {4, "quantization oracle and gradient check", criterion_quantization_and_gradients},
      {5, "rank weighting", criterion_weighting},
      {6, "Frechet analytic cases", criterion_frechet},
      {7, "protocol arithmetic and determinism", criterion_protocol},
      {8, "desk-scale improvement over the training data", criterion_desk_scale_improvement},
      {9, "weighted retraining benefit", criterion_weighted_retraining_benefit},
      {10, "t-sweep ablation harness", criterion_ablation_harness},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": " << c.name
              << " — " << detail << '\n';
    if (!ok) ++failures;
  }
  std::cout << (failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES: ")
            << (failures == 0 ? "" : std::to_string(failures)) << '\n';
  return failures == 0 ? 0 : 1;
}

#include <doctest.h>

#include <cmath>

#include "treelso/face_task.hpp"
#include "treelso/lso_loop.hpp"

using namespace treelso;

namespace {

qae::QaeConfig desk_config() {
  qae::QaeConfig cfg;
  cfg.image_height = 16;
  cfg.image_width = 16;
  cfg.image_channels = 1;
  cfg.hidden_channels = 8;
  cfg.embed_dim = 4;
  cfg.codebook_size = 8;
  return cfg;
}

gbt::GbtConfig small_gbt() {
  gbt::GbtConfig cfg;
  cfg.n_trees = 25;
  cfg.min_samples_leaf = 2;
  return cfg;
}

lso::LsoState make_state(int budget, int r, int t, std::uint64_t seed,
                         bool weighted_retraining = true, std::size_t n_images = 16) {
  lso::LsoConfig cfg;
  cfg.query_budget = budget;
  cfg.retrain_every = r;
  cfg.free_variables = t;
  cfg.seed = seed;
  cfg.finetune_epochs = 1;
  cfg.weighted_retraining = weighted_retraining;
  Rng model_rng(900 + seed);
  qae::QaeModel model = qae::QaeModel::random_init(desk_config(), model_rng);
  lso::WeightedDataset data = faces::make_dataset(n_images, 2.0, 42);
  return lso::LsoState::initialize(cfg, small_gbt(), faces::score, std::move(data),
                                   std::move(model));
}

}  // namespace

TEST_CASE("rank_weights") {
  SUBCASE("single item gets weight one") {
    CHECK(lso::rank_weights({3.7}, 1e-3) == std::vector<double>{1.0});
  }
  SUBCASE("three-point example reproduces the closed form") {
    // unnormalized 1/3, 1/5, 1/4 over ranks 0, 2, 1
    const std::vector<double> w = lso::rank_weights({3.0, 1.0, 2.0}, 1.0);
    CHECK(w[0] == doctest::Approx(20.0 / 47.0).epsilon(1e-10));
    CHECK(w[1] == doctest::Approx(12.0 / 47.0).epsilon(1e-10));
    CHECK(w[2] == doctest::Approx(15.0 / 47.0).epsilon(1e-10));
  }
  SUBCASE("weights sum to one within 1e-12") {
    Rng rng(1);
    std::vector<double> scores;
    for (int i = 0; i < 137; ++i) scores.push_back(rng.uniform(-5.0, 5.0));
    const std::vector<double> w = lso::rank_weights(scores, 1e-3);
    double sum = 0.0;
    for (double v : w) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
  SUBCASE("large k flattens the distribution") {
    Rng rng(2);
    std::vector<double> scores;
    for (int i = 0; i < 100; ++i) scores.push_back(rng.uniform01());
    const std::vector<double> w = lso::rank_weights(scores, 1e6);
    const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
    CHECK(*hi - *lo < 1e-5);
  }
  SUBCASE("strictly higher score means strictly greater weight, ties share") {
    const std::vector<double> w = lso::rank_weights({1.0, 2.0, 2.0, 0.5}, 0.1);
    CHECK(w[1] == w[2]);
    CHECK(w[1] > w[0]);
    CHECK(w[0] > w[3]);
  }
  SUBCASE("non-finite scores are rejected") {
    CHECK_THROWS_AS((void)lso::rank_weights({1.0, std::nan("")}, 1e-3), InvalidInput);
  }
}

TEST_CASE("select_free_variables") {
  CHECK(lso::select_free_variables({0.0, 1.0, 0.5}, 2) == std::vector<int>{1, 2});
  CHECK(lso::select_free_variables({0.3, 0.3, 0.3}, 3) == std::vector<int>{0, 1, 2});
  CHECK(lso::select_free_variables({0.1, 0.2}, 2) == std::vector<int>{0, 1});
  CHECK_THROWS_AS((void)lso::select_free_variables({0.1}, 2), InvalidInput);
}

TEST_CASE("topk_curve") {
  SUBCASE("k=1 is the running maximum") {
    const auto series = lso::topk_curve({1.0, 3.0, 2.0, 4.0}, 1);
    CHECK(*series[0] == 1.0);
    CHECK(*series[1] == 3.0);
    CHECK(*series[2] == 3.0);
    CHECK(*series[3] == 4.0);
  }
  SUBCASE("hand-counted k=2 example") {
    const auto series = lso::topk_curve({1.0, 3.0, 2.0}, 2);
    CHECK(!series[0].has_value());
    CHECK(*series[1] == 1.0);
    CHECK(*series[2] == 2.0);
  }
  SUBCASE("constant values give a constant series from m = k") {
    const auto series = lso::topk_curve({2.5, 2.5, 2.5, 2.5}, 3);
    CHECK(!series[1].has_value());
    CHECK(*series[2] == 2.5);
    CHECK(*series[3] == 2.5);
  }
  SUBCASE("monotone and ordered between k scales") {
    Rng rng(3);
    std::vector<double> f;
    for (int i = 0; i < 60; ++i) f.push_back(rng.uniform(-1.0, 1.0));
    const auto top2 = lso::topk_curve(f, 2);
    const auto top5 = lso::topk_curve(f, 5);
    for (std::size_t m = 1; m < f.size(); ++m) {
      if (top2[m - 1] && top2[m]) CHECK(*top2[m] >= *top2[m - 1]);
      if (top5[m - 1] && top5[m]) CHECK(*top5[m] >= *top5[m - 1]);
      if (top2[m] && top5[m]) CHECK(*top2[m] >= *top5[m]);
    }
  }
}

TEST_CASE("lso_iteration") {
  SUBCASE("t equal to the latent count leaves no fixed variables") {
    lso::LsoState state = make_state(1, 5, 16, 1);
    const lso::QueryRecord rec = lso::lso_iteration(state);
    CHECK(rec.free_variable_indices.size() == 16);
    CHECK(rec.iteration == 1);
    CHECK(rec.surrogate_value ==
          doctest::Approx(gbt::predict(state.surrogate, rec.proposal.flatten()))
              .epsilon(1.0));  // refit happened; just check the record is filled
  }
  SUBCASE("zero-split surrogate proposes the lexicographic minimum on free vars") {
    lso::LsoState state = make_state(1, 5, 4, 2);
    // constant targets force a splitless surrogate
    for (double& t : state.surrogate_data.targets) t = 1.0;
    state.surrogate = gbt::fit(state.surrogate_data, state.gbt_config);
    const lso::QueryRecord rec = lso::lso_iteration(state);
    const qae::LatentGrid anchor_latent =
        qae::encode_latent(state.model, state.dataset.images[rec.anchor_index]);
    std::vector<bool> is_free(16, false);
    for (int v : rec.free_variable_indices) is_free[static_cast<std::size_t>(v)] = true;
    for (int v = 0; v < 16; ++v) {
      if (is_free[static_cast<std::size_t>(v)])
        CHECK(rec.proposal.flatten()[static_cast<std::size_t>(v)] == 0);
      else
        CHECK(rec.proposal.flatten()[static_cast<std::size_t>(v)] ==
              anchor_latent.flatten()[static_cast<std::size_t>(v)]);
    }
  }
  SUBCASE("refit moves the surrogate prediction toward the observed score") {
    lso::LsoState state = make_state(1, 5, 4, 3);
    for (double& t : state.surrogate_data.targets) t = 1.0;
    state.surrogate = gbt::fit(state.surrogate_data, state.gbt_config);
    const gbt::TreeEnsemble before = state.surrogate;
    const lso::QueryRecord rec = lso::lso_iteration(state);
    const double err_before = std::abs(gbt::predict(before, rec.proposal.flatten()) -
                                       rec.f_value);
    const double err_after =
        std::abs(gbt::predict(state.surrogate, rec.proposal.flatten()) - rec.f_value);
    CHECK(err_after <= err_before);
  }
}

TEST_CASE("run schedule and bookkeeping") {
  SUBCASE("budget below r never retrains but the dataset still grows") {
    lso::LsoState state = make_state(3, 5, 4, 4);
    const std::size_t before = state.dataset.size();
    const lso::Trajectory traj = lso::run(state);
    CHECK(traj.retrain_iterations.empty());
    CHECK(traj.records.size() == 3);
    CHECK(state.dataset.size() == before + 3);
    state.dataset.validate();
  }
  SUBCASE("budget 10 with r 5 fine-tunes exactly twice") {
    lso::LsoState state = make_state(10, 5, 4, 5);
    const std::size_t before = state.dataset.size();
    const lso::Trajectory traj = lso::run(state);
    CHECK(traj.retrain_iterations == std::vector<int>{5, 10});
    CHECK(state.dataset.size() == before + 10);
    state.dataset.validate();
  }
  SUBCASE("disabled retraining leaves no events") {
    lso::LsoState state = make_state(6, 2, 4, 6, false);
    const lso::Trajectory traj = lso::run(state);
    CHECK(traj.retrain_iterations.empty());
    CHECK(traj.records.size() == 6);
  }
  SUBCASE("zero budget yields the empty trajectory") {
    lso::LsoState state = make_state(0, 5, 4, 7);
    const lso::Trajectory traj = lso::run(state);
    CHECK(traj.records.empty());
  }
}

TEST_CASE("identical seeds reproduce the trajectory bit for bit") {
  lso::LsoState a = make_state(6, 3, 4, 11);
  lso::LsoState b = make_state(6, 3, 4, 11);
  const std::string csv_a = lso::trajectory_csv(lso::run(a));
  const std::string csv_b = lso::trajectory_csv(lso::run(b));
  CHECK(csv_a == csv_b);
  CHECK(!csv_a.empty());
}

TEST_CASE("proposals attain the exact box maximum of the proposal-time surrogate") {
  lso::LsoState state = make_state(4, 2, 3, 13);
  lso::ProposalObserver observer = [&](int, const gbt::TreeEnsemble& surrogate,
                                       const treeopt::VariableDomain& box,
                                       const lso::QueryRecord& rec) {
    const treeopt::MaximizeResult bf = treeopt::brute_force_maximize(surrogate, box);
    CHECK(rec.surrogate_value == bf.value);
    CHECK(gbt::predict(surrogate, rec.proposal.flatten()) == rec.surrogate_value);
    return true;
  };
  const lso::Trajectory traj = lso::run(state, observer);
  CHECK(traj.records.size() == 4);
}

TEST_CASE("trajectory csv round trip") {
  lso::LsoState state = make_state(5, 2, 3, 17);
  const lso::Trajectory traj = lso::run(state);
  const std::string csv = lso::trajectory_csv(traj);
  const lso::Trajectory back = lso::trajectory_from_csv(csv);
  REQUIRE(back.records.size() == traj.records.size());
  for (std::size_t i = 0; i < traj.records.size(); ++i) {
    CHECK(back.records[i].iteration == traj.records[i].iteration);
    CHECK(back.records[i].f_value == traj.records[i].f_value);
    CHECK(back.records[i].surrogate_value == traj.records[i].surrogate_value);
  }
  CHECK_THROWS_AS((void)lso::trajectory_from_csv("bogus\n"), ParseError);
}

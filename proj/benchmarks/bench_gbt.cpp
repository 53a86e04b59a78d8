#include <benchmark/benchmark.h>

#include "treelso/gbt.hpp"
#include "treelso/rng.hpp"

using namespace treelso;

namespace {

gbt::CategoricalDataset make_data(std::size_t rows, std::size_t features, int domain) {
  Rng rng(1);
  gbt::CategoricalDataset data;
  data.domain_sizes.assign(features, domain);
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<std::int32_t> row(features);
    for (auto& v : row)
      v = static_cast<std::int32_t>(rng.index(static_cast<std::size_t>(domain)));
    data.add_row(std::move(row), rng.uniform(-1.0, 1.0));
  }
  return data;
}

void BM_GbtFit(benchmark::State& state) {
  const gbt::CategoricalDataset data =
      make_data(static_cast<std::size_t>(state.range(0)), 16, 16);
  gbt::GbtConfig cfg;
  cfg.n_trees = static_cast<int>(state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(gbt::fit(data, cfg));
  }
}

void BM_GbtPredict(benchmark::State& state) {
  const gbt::CategoricalDataset data = make_data(600, 16, 16);
  gbt::GbtConfig cfg;
  cfg.n_trees = 800;
  const gbt::TreeEnsemble m = gbt::fit(data, cfg);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gbt::predict(m, data.rows[i % data.num_rows()]));
    ++i;
  }
}

}  // namespace

BENCHMARK(BM_GbtFit)->Args({600, 100})->Args({600, 800})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GbtPredict);

BENCHMARK_MAIN();

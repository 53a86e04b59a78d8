#include <benchmark/benchmark.h>

#include "treelso/gbt.hpp"
#include "treelso/rng.hpp"
#include "treelso/tree_opt.hpp"

using namespace treelso;

namespace {

struct Instance {
  gbt::TreeEnsemble model;
  treeopt::VariableDomain domain;
};

Instance make_instance(std::size_t n_latents, int codebook, int free_vars) {
  Rng rng(2);
  gbt::CategoricalDataset data;
  data.domain_sizes.assign(n_latents, codebook);
  for (std::size_t i = 0; i < 600; ++i) {
    std::vector<std::int32_t> row(n_latents);
    for (auto& v : row)
      v = static_cast<std::int32_t>(rng.index(static_cast<std::size_t>(codebook)));
    data.add_row(std::move(row), rng.uniform(-1.0, 1.0));
  }
  gbt::GbtConfig cfg;
  cfg.n_trees = 800;
  Instance inst{gbt::fit(data, cfg), treeopt::VariableDomain::all_free(data.domain_sizes)};
  for (std::size_t j = static_cast<std::size_t>(free_vars); j < n_latents; ++j)
    inst.domain.fix(j, static_cast<std::int32_t>(
                           rng.index(static_cast<std::size_t>(codebook))));
  return inst;
}

void BM_Maximize(benchmark::State& state) {
  const Instance inst = make_instance(16, 16, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(treeopt::maximize(inst.model, inst.domain));
  }
}

void BM_BruteForce(benchmark::State& state) {
  const Instance inst = make_instance(16, 16, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(treeopt::brute_force_maximize(inst.model, inst.domain));
  }
}

void BM_EncodeMio(benchmark::State& state) {
  const Instance inst = make_instance(16, 16, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(treeopt::encode_mio(inst.model, inst.domain));
  }
}

}  // namespace

BENCHMARK(BM_Maximize)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BruteForce)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EncodeMio)->Unit(benchmark::kMillisecond);

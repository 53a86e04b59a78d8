#include <benchmark/benchmark.h>

#include "treelso/face_task.hpp"
#include "treelso/qae.hpp"
#include "treelso/rng.hpp"

using namespace treelso;

namespace {

qae::QaeConfig desk_config() {
  qae::QaeConfig cfg;
  cfg.image_height = 16;
  cfg.image_width = 16;
  cfg.hidden_channels = 16;
  cfg.embed_dim = 8;
  cfg.codebook_size = 16;
  return cfg;
}

void BM_TrainStep(benchmark::State& state) {
  Rng rng(3);
  qae::QaeModel model = qae::QaeModel::random_init(desk_config(), rng);
  const lso::WeightedDataset data = faces::make_dataset(16, 2.0, 4);
  const std::vector<double> uniform(16, 1.0);
  qae::AdamState adam;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qae::train_step(model, data.images, uniform, adam));
  }
}

void BM_EncodeLatent(benchmark::State& state) {
  Rng rng(3);
  const qae::QaeModel model = qae::QaeModel::random_init(desk_config(), rng);
  const lso::WeightedDataset data = faces::make_dataset(1, 2.0, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(qae::encode_latent(model, data.images[0]));
  }
}

void BM_Decode(benchmark::State& state) {
  Rng rng(3);
  const qae::QaeModel model = qae::QaeModel::random_init(desk_config(), rng);
  qae::LatentGrid z(4, 4);
  for (int i = 0; i < 16; ++i) z.idx[static_cast<std::size_t>(i)] = i % 16;
  for (auto _ : state) {
    benchmark::DoNotOptimize(qae::decode(model, z));
  }
}

}  // namespace

BENCHMARK(BM_TrainStep)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_EncodeLatent)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Decode)->Unit(benchmark::kMicrosecond);

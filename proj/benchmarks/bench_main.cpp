#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mtlfno/autodiff.hpp"
#include "mtlfno/model.hpp"
#include "mtlfno/spectral.hpp"
#include "mtlfno/training.hpp"
#include "mtlfno/weight_factory.hpp"

namespace {

using namespace mtlfno;

Tensor random_tensor(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Tensor t(shape);
  for (double& x : t.data()) x = d(rng);
  return t;
}

ModelConfig desk_model(ModelVariant variant) {
  ModelConfig cfg;
  cfg.k1 = 8;
  cfg.k2 = 8;
  cfg.channels = 8;
  cfg.layers = 3;
  cfg.rank = 8;
  cfg.hidden = 8;
  cfg.tasks = 4;
  cfg.variant = variant;
  return cfg;
}

void BM_Rfft2(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor v = random_tensor({n, n, 8}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(spectral::rfft2(v));
}
BENCHMARK(BM_Rfft2)->Arg(32)->Arg(64);

void BM_TruncatedRfft2(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor v = random_tensor({n, n, 8}, 2);
  const spectral::ModeLayout layout{8, 8, n, n};
  for (auto _ : state) benchmark::DoNotOptimize(spectral::truncated_rfft2(v, layout));
}
BENCHMARK(BM_TruncatedRfft2)->Arg(32)->Arg(64);

void BM_Cayley(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const ComplexTensor k = skew_hermitian({random_tensor({8, 8, c, c}, 3), random_tensor({8, 8, c, c}, 4)});
  for (auto _ : state) benchmark::DoNotOptimize(cayley(k));
}
BENCHMARK(BM_Cayley)->Arg(8)->Arg(32);

void BM_Predict(benchmark::State& state) {
  const ModelConfig cfg = desk_model(static_cast<ModelVariant>(state.range(0)));
  const Model model = Model::initialize(cfg, 5);
  const Tensor sensors = random_tensor({1, cfg.n_sensors}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(0, sensors));
  state.SetLabel(to_string(cfg.variant));
}
BENCHMARK(BM_Predict)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_TrainEpoch(benchmark::State& state) {
  ModelConfig cfg = desk_model(static_cast<ModelVariant>(state.range(0)));
  std::vector<Samples> data;
  for (std::size_t t = 0; t < cfg.tasks; ++t) {
    Samples s;
    s.sensors = random_tensor({20, cfg.n_sensors}, 10 + t);
    s.fields = random_tensor({20, cfg.grid_h, cfg.grid_w}, 20 + t);
    s.conditions = random_tensor({20, 5}, 30 + t);
    data.push_back(std::move(s));
  }
  TrainConfig tc;
  tc.epochs = 1;
  for (auto _ : state) {
    Model model = Model::initialize(cfg, 7);
    benchmark::DoNotOptimize(train(model, data, tc));
  }
  state.SetLabel(to_string(cfg.variant) + ", 4 tasks x 20 samples");
}
BENCHMARK(BM_TrainEpoch)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include <random>

#include "gmeld/dc/ops.hpp"
#include "gmeld/fusion/fusion.hpp"
#include "gmeld/methods/methods.hpp"
#include "gmeld/world/world.hpp"

using namespace gmeld;

namespace {

dc::Tensor random_tensor(dc::Shape shape, std::mt19937_64& rng) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  std::normal_distribution<double> g;
  for (auto& x : v) x = g(rng);
  return dc::Tensor(std::move(shape), std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const auto a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(dc::matmul(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BM_MultiTransForward(benchmark::State& state) {
  const auto frames = static_cast<std::size_t>(state.range(0));
  const auto spec = world::WorldSpec::desk_default();
  const auto cfg = fusion::MultiTransConfig::for_dims(64, spec.num_sensors);
  std::mt19937_64 rng(2);
  dc::ParamStore params;
  fusion::init_multitrans(params, "mt.", cfg, rng);
  const auto x = random_tensor({frames, spec.num_sensors, cfg.model_dim}, rng);
  dc::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(fusion::multitrans_forward(x, params, "mt.", cfg));
}
BENCHMARK(BM_MultiTransForward)->Arg(10)->Arg(40);

void BM_TrainStep(benchmark::State& state) {
  const char* label = state.range(0) == 0 ? "D" : "F-3";
  const auto spec = world::WorldSpec::desk_default();
  const auto data = world::generate_dataset(spec, {24, 1, 1});
  const auto method = methods::MethodSpec::parse(label);
  const auto tc = methods::train_config(method, spec, methods::MeldSettings{}, methods::TrainSettings{}, 1);
  meld::Network net(spec, methods::network_config(method, meld::NetworkConfig{}), 1);
  const meld::ClipSource src(data.split.train, spec);
  const std::vector<std::size_t> idx = {0, 1, 2, 3};
  const auto batch = meld::make_batch(src, idx, true);
  meld::TrainState st{net.params().view(""), tc.step.distill ? net.encoder_params().deep_copy() : dc::ParamStore{},
                      dc::OptimizerState{}, 0.95, weak::ClassWeights::from_counts(data.split.class_counts)};
  std::mt19937_64 rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(meld::train_step(net, st, batch, 0.05, tc.step, rng));
  state.SetLabel(label);
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();

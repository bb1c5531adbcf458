#include <vector>

#include <benchmark/benchmark.h>

#include "maskdet/core/config.hpp"
#include "maskdet/data/scene.hpp"
#include "maskdet/model/inference.hpp"
#include "maskdet/model/network.hpp"
#include "maskdet/train/step.hpp"

using namespace maskdet;

// Reference-size model (96 x 320 input) in single precision.

static void BM_Inference(benchmark::State& state) {
  const Config cfg;
  model::Network<float> net(cfg, 1);
  const Sample s = generate_scene(SceneRecipe{}, 0);
  for (auto _ : state) benchmark::DoNotOptimize(model::predict(net, s));
}
BENCHMARK(BM_Inference)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  Config cfg;
  cfg.use_masking = state.range(0) != 0;
  cfg.use_completion = state.range(0) != 0;
  model::Network<float> net(cfg, 1);
  std::vector<Sample> scenes;
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(cfg.batch_size); ++i) {
    scenes.push_back(generate_scene(SceneRecipe{}, i));
  }
  std::vector<const Sample*> batch;
  for (const auto& s : scenes) batch.push_back(&s);
  for (auto _ : state) {
    std::vector<nn::Rng> rngs;
    for (std::size_t b = 0; b < batch.size(); ++b) rngs.emplace_back(b);
    net.zero_grad();
    benchmark::DoNotOptimize(train::train_step<float>(net, batch, rngs));
  }
  state.SetLabel(state.range(0) ? "full" : "baseline");
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_GenerateScene(benchmark::State& state) {
  const SceneRecipe recipe;
  std::uint64_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_scene(recipe, i++));
}
BENCHMARK(BM_GenerateScene)->Unit(benchmark::kMillisecond);

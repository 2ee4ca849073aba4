// Copyright 2026 The Attnpan Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <vector>

#include <benchmark/benchmark.h>

#include "attnpan/data.h"
#include "attnpan/detector.h"
#include "attnpan/fusion.h"
#include "attnpan/maskgen.h"
#include "attnpan/metrics.h"
#include "attnpan/model.h"
#include "attnpan/nn.h"
#include "attnpan/pipeline.h"
#include "attnpan/random.h"

namespace attnpan {
namespace {

Tensorf RandomTensor(Rng& rng, Shape4 shape) {
  Tensorf t(shape);
  for (auto& v : t.storage()) v = static_cast<float>(rng.Uniform(-1, 1));
  return t;
}

ModelConfig SyntheticModel() {
  ModelConfig c;
  c.num_att = 8;
  c.num_things = 3;
  c.num_stuff = 2;
  return c;
}

// Args: spatial size, channels.
void BM_Conv3x3Forward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const int ch = static_cast<int>(state.range(1));
  Conv2D<float> conv(ch, ch, 3);
  Rng rng(1);
  conv.Init(rng, 0.1);
  const Tensorf x = RandomTensor(rng, {1, size, size, ch});
  for (auto _ : state) benchmark::DoNotOptimize(conv.Forward(x, false));
  state.SetItemsProcessed(state.iterations() * size * size * ch * ch * 9);
}
BENCHMARK(BM_Conv3x3Forward)->Args({32, 64})->Args({64, 64})->Args({32, 128});

void BM_GenerateMasks(benchmark::State& state) {
  const ModelConfig c = SyntheticModel();
  const Sample s = GenerateSample(SyntheticConfig{}, 0);
  const auto dets = OracleDetections(s.instances, {}, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(GenerateMasks(dets, 8, 8, c));
  }
}
BENCHMARK(BM_GenerateMasks);

void BM_Fuse(benchmark::State& state) {
  const ModelConfig c = SyntheticModel();
  const int h = static_cast<int>(state.range(0)) / kFeatureStride;
  Rng rng(2);
  const Tensorf logits = RandomTensor(rng, {1, h, h, c.num_out()});
  const Sample s = GenerateSample(SyntheticConfig{}, 0);
  const AttentionStack stack =
      GenerateMasks(OracleDetections(s.instances, {}, 0), h, h, c);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Fuse(logits, stack, c, h * kFeatureStride,
                                  h * kFeatureStride));
  }
}
BENCHMARK(BM_Fuse)->Arg(64)->Arg(256);

void BM_ComputePQ(benchmark::State& state) {
  SyntheticConfig config;
  config.height = config.width = static_cast<int>(state.range(0));
  const Sample a = GenerateSample(config, 0);
  const Sample b = GenerateSample(config, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ComputePQ(a.panoptic, b.panoptic, SyntheticLabels()));
  }
}
BENCHMARK(BM_ComputePQ)->Arg(64)->Arg(256);

void BM_PredictOracle(benchmark::State& state) {
  PanopticModel model(SyntheticModel());
  model.Init(0);
  PipelineOptions options;
  options.detector = DetectorMode::kOracle;
  Predictor predictor(model, options);
  const Sample s = GenerateSample(SyntheticConfig{}, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(predictor.Predict(s.image, s.instances));
  }
}
BENCHMARK(BM_PredictOracle)->Unit(benchmark::kMillisecond);

void BM_PredictLearned(benchmark::State& state) {
  PanopticModel model(SyntheticModel());
  model.Init(0);
  Predictor predictor(model, PipelineOptions{});
  SyntheticConfig config;
  config.height = static_cast<int>(state.range(0));
  config.width = static_cast<int>(state.range(1));
  const Sample s = GenerateSample(config, 0);
  for (auto _ : state) benchmark::DoNotOptimize(predictor.Predict(s.image));
}
BENCHMARK(BM_PredictLearned)
    ->Args({64, 64})
    ->Args({256, 512})
    ->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace attnpan

BENCHMARK_MAIN();

// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "rscope/container.hpp"
#include "rscope/fixture.hpp"
#include "rscope/lens.hpp"
#include "rscope/probes.hpp"

namespace {

rscope::ProbeDataset random_dataset(int samples, int dims) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> normal;
  rscope::FeatureMatrix x;
  x.rows = samples;
  x.cols = dims;
  for (int i = 0; i < samples * dims; ++i) x.data.push_back(normal(gen));
  std::vector<double> y;
  for (int i = 0; i < samples; ++i) y.push_back(static_cast<double>(i % 17));
  return rscope::ProbeDataset::from_features({x, x}, y, rscope::ProbeCondition::repeated);
}

void BM_ProbeLayer(benchmark::State& state) {
  const auto ds = random_dataset(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(rscope::probe_layer(ds, 1));
}
BENCHMARK(BM_ProbeLayer)->Args({19, 64})->Args({19, 2048})->Args({200, 64});

rscope::FixtureConfig bench_config(int d_model) {
  rscope::FixtureConfig cfg;
  cfg.n_layers = 16;
  cfg.d_model = d_model;
  cfg.vocab_size = 4096;
  return cfg;
}

void BM_Project(benchmark::State& state) {
  const auto trace = rscope::generate(bench_config(static_cast<int>(state.range(0))), 10);
  const auto lens = rscope::LensInputs::of(trace);
  const auto s = trace.states.post_layer(8);
  for (auto _ : state) benchmark::DoNotOptimize(rscope::project(s, lens, 8));
}
BENCHMARK(BM_Project)->Arg(64)->Arg(512);

void BM_EncodeTrace(benchmark::State& state) {
  const auto trace = rscope::generate(bench_config(256), 10);
  for (auto _ : state) benchmark::DoNotOptimize(rscope::encode_trace(trace));
}
BENCHMARK(BM_EncodeTrace);

void BM_DecodeTrace(benchmark::State& state) {
  const auto bytes = rscope::encode_trace(rscope::generate(bench_config(256), 10));
  for (auto _ : state) benchmark::DoNotOptimize(rscope::decode_trace(bytes));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_DecodeTrace);

}  // namespace

BENCHMARK_MAIN();

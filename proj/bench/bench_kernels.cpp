/*
 * Copyright 2026 The loft Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Serial reference kernels against the OpenMP kernels on the same batches.
//
//   bench_kernels --benchmark_filter=Forward
//
// Arguments are (batch size, adapter on). Thread count follows
// OMP_NUM_THREADS.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "loft/kernels.hpp"
#include "loft/losses.hpp"

namespace loft {
namespace {

constexpr std::size_t kClasses = 100;
constexpr std::size_t kDim = 512;

struct Batch {
  ClassifierHead head;
  std::vector<EmbeddingRecord> records;
  std::vector<const EmbeddingRecord*> ptrs;
  std::vector<EmbeddingView> views;
};

Batch MakeBatch(std::size_t n, bool adapter, Label label) {
  std::mt19937_64 rng(n);
  std::normal_distribution<double> g(0.0, 1.0);
  Batch b{ClassifierHead(kClasses, kDim, {adapter, 32}, 1), {}, {}, {}};
  for (auto block : b.head.params().Blocks()) {
    for (double& x : block) x = 0.05 * g(rng);
  }
  b.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = b.records[i];
    r.id = i;
    r.label = label == kUnlabeled ? kUnlabeled : static_cast<Label>(i % kClasses);
    r.weak.resize(kDim);
    r.strong.resize(kDim);
    for (std::size_t j = 0; j < kDim; ++j) {
      r.weak[j] = static_cast<float>(g(rng));
      r.strong[j] = r.weak[j] + static_cast<float>(0.5 * g(rng));
    }
  }
  for (const auto& r : b.records) {
    b.ptrs.push_back(&r);
    b.views.emplace_back(r.weak);
  }
  return b;
}

void Forward(benchmark::State& state, Exec exec) {
  const auto b = MakeBatch(state.range(0), state.range(1) != 0, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ForwardBatch(b.head, b.views, exec));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void ForwardBackward(benchmark::State& state, Exec exec) {
  const auto b = MakeBatch(state.range(0), state.range(1) != 0, 0);
  const Matrix dlogits(b.views.size(), kClasses, 1e-3);
  for (auto _ : state) {
    const auto acts = ForwardBatch(b.head, b.views, exec);
    auto grads = HeadParams::Zeros(kClasses, kDim, b.head.adapter());
    BackwardBatch(b.head, b.views, acts, dlogits, grads, exec);
    benchmark::DoNotOptimize(grads);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void Supervised(benchmark::State& state, Exec exec) {
  const auto b = MakeBatch(state.range(0), state.range(1) != 0, 0);
  const ClassPrior prior{std::vector<double>(kClasses, 1.0 / kClasses)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(SupervisedLoss(b.head, b.ptrs, prior, 1.0, exec));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void Unlabeled(benchmark::State& state, Exec exec) {
  const auto b = MakeBatch(state.range(0), state.range(1) != 0, kUnlabeled);
  for (auto _ : state) {
    benchmark::DoNotOptimize(UnlabeledLoss(b.head, b.ptrs, LossConfig{}, true, exec));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void Args(benchmark::internal::Benchmark* b) {
  for (int n : {64, 256, 1024}) {
    for (int adapter : {0, 1}) b->Args({n, adapter});
  }
  b->Unit(benchmark::kMicrosecond);
}

BENCHMARK_CAPTURE(Forward, serial, Exec::kSerial)->Apply(Args);
BENCHMARK_CAPTURE(Forward, parallel, Exec::kParallel)->Apply(Args);
BENCHMARK_CAPTURE(ForwardBackward, serial, Exec::kSerial)->Apply(Args);
BENCHMARK_CAPTURE(ForwardBackward, parallel, Exec::kParallel)->Apply(Args);
BENCHMARK_CAPTURE(Supervised, serial, Exec::kSerial)->Apply(Args);
BENCHMARK_CAPTURE(Supervised, parallel, Exec::kParallel)->Apply(Args);
BENCHMARK_CAPTURE(Unlabeled, serial, Exec::kSerial)->Apply(Args);
BENCHMARK_CAPTURE(Unlabeled, parallel, Exec::kParallel)->Apply(Args);

}  // namespace
}  // namespace loft

BENCHMARK_MAIN();

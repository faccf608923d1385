/*
 * Copyright 2026 The lcp Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lcp/evaluation.hpp"
#include "lcp/model.hpp"
#include "lcp/training.hpp"

namespace {

lcp::Model toy_model(int max_len) {
  auto cfg = lcp::encoder_preset("toy");
  cfg.vocab_size = 200;
  cfg.max_len = max_len;
  return lcp::init_model(cfg, false, 1);
}

std::vector<lcp::Example> batch_of(std::size_t n, std::size_t len) {
  std::mt19937_64 gen(2);
  std::vector<lcp::Example> batch(n);
  for (auto& ex : batch) {
    ex.seq.ids.push_back(lcp::kStartId);
    for (std::size_t i = 1; i < len; ++i) ex.seq.ids.push_back(static_cast<lcp::TokenId>(4 + gen() % 196));
    ex.gold = static_cast<double>(gen() % 1000) / 1000.0;
  }
  return batch;
}

void BM_Forward(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const auto m = toy_model(static_cast<int>(len));
  const auto batch = batch_of(1, len);
  for (auto _ : state) benchmark::DoNotOptimize(lcp::forward(m, 0, batch[0].seq, std::nullopt));
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(64)->Arg(256);

void BM_ForwardBackward(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const auto m = toy_model(static_cast<int>(len));
  const auto batch = batch_of(16, len);
  lcp::Gradients g(m);
  for (auto _ : state) {
    g.zero();
    benchmark::DoNotOptimize(lcp::task_loss_and_grad(m, 0, batch, g));
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(64);

void BM_SmartStep(benchmark::State& state) {
  const auto m = toy_model(32);
  const auto batch = batch_of(16, 32);
  lcp::AdversarialConfig adv;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    lcp::Gradients g(m);
    const auto deltas = lcp::pgd_perturb(m, 0, batch, adv, seed++);
    benchmark::DoNotOptimize(lcp::smart_loss_with_perturbation(m, 0, batch, deltas, adv.alpha, &g));
  }
}
BENCHMARK(BM_SmartStep);

void BM_Metrics(benchmark::State& state) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(static_cast<std::size_t>(state.range(0))), g(p.size());
  for (auto& x : p) x = u(gen);
  for (auto& x : g) x = u(gen);
  for (auto _ : state) benchmark::DoNotOptimize(lcp::compute_metrics(p, g));
}
BENCHMARK(BM_Metrics)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();

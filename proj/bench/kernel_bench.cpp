// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>

#include "tokroute/catalog.h"
#include "tokroute/compute.h"
#include "tokroute/dispatch.h"
#include "tokroute/linalg.h"
#include "tokroute/routing.h"
#include "tokroute/synthetic.h"

namespace {

using namespace tokroute;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Matrix m(rows, cols);
  for (float& v : m.data()) v = normal(rng);
  return m;
}

ScenarioBatch bench_batch(std::size_t tokens) {
  return make_scenario_batch(Scenario::interleaved_balanced, {tokens, 128, 16, 4, 1000, 4, 42});
}

void BM_MatmulSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 128, 1), b = random_matrix(128, 128, 2);
  for (auto _ : state) benchmark::DoNotOptimize(serial::matmul(a, b));
}

void BM_MatmulOpenMP(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 128, 1), b = random_matrix(128, 128, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}

void BM_RouteCompositionalSerial(benchmark::State& state) {
  const auto sb = bench_batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(serial::route_batch_compositional(sb.batch, sb.breaks, 4));
}

void BM_RouteCompositionalOpenMP(benchmark::State& state) {
  const auto sb = bench_batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(route_batch_compositional(sb.batch, sb.breaks, 4));
}

void BM_DispatchDeterministic(benchmark::State& state) {
  const auto sb = bench_batch(static_cast<std::size_t>(state.range(0)));
  const auto decision = route_batch_compositional(sb.batch, sb.breaks, 4);
  for (auto _ : state) benchmark::DoNotOptimize(build_dispatch(decision, DispatchMode::deterministic));
}

void BM_DispatchParallel(benchmark::State& state) {
  const auto sb = bench_batch(static_cast<std::size_t>(state.range(0)));
  const auto decision = route_batch_compositional(sb.batch, sb.breaks, 4);
  for (auto _ : state) benchmark::DoNotOptimize(build_dispatch(decision, DispatchMode::parallel));
}

void BM_LoraReference(benchmark::State& state) {
  const auto sb = bench_batch(static_cast<std::size_t>(state.range(0)));
  const auto decision = route_batch_compositional(sb.batch, sb.breaks, 4);
  const auto catalog = AdapterCatalog::random(4, 4, 128, 16, 7, BInit::gaussian);
  for (auto _ : state) benchmark::DoNotOptimize(lora_forward_reference(sb.batch, decision, catalog));
}

void BM_LoraGrouped(benchmark::State& state) {
  const auto sb = bench_batch(static_cast<std::size_t>(state.range(0)));
  const auto decision = route_batch_compositional(sb.batch, sb.breaks, 4);
  const auto catalog = AdapterCatalog::random(4, 4, 128, 16, 7, BInit::gaussian);
  for (auto _ : state) benchmark::DoNotOptimize(lora_forward_per_token(sb.batch, decision, catalog));
}

}  // namespace

BENCHMARK(BM_MatmulSerial)->Arg(256)->Arg(2048);
BENCHMARK(BM_MatmulOpenMP)->Arg(256)->Arg(2048);
BENCHMARK(BM_RouteCompositionalSerial)->Arg(2048)->Arg(1 << 16);
BENCHMARK(BM_RouteCompositionalOpenMP)->Arg(2048)->Arg(1 << 16);
BENCHMARK(BM_DispatchDeterministic)->Arg(2048)->Arg(1 << 16);
BENCHMARK(BM_DispatchParallel)->Arg(2048)->Arg(1 << 16);
BENCHMARK(BM_LoraReference)->Arg(512)->Arg(2048);
BENCHMARK(BM_LoraGrouped)->Arg(512)->Arg(2048);

BENCHMARK_MAIN();

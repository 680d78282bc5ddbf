#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "hytas/kernels.hpp"
#include "hytas/model.hpp"
#include "hytas/proxies.hpp"

using namespace hytas;

namespace {

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <auto Gemm>
void run_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1);
  const auto b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    Gemm(kernels::GemmDims{n, n, n}, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}

void BM_GemmReference(benchmark::State& s) { run_gemm<kernels::reference::gemm>(s); }
void BM_GemmBlocked(benchmark::State& s) { run_gemm<kernels::gemm>(s); }
void BM_GemmNtReference(benchmark::State& s) { run_gemm<kernels::reference::gemm_nt>(s); }
void BM_GemmNtBlocked(benchmark::State& s) { run_gemm<kernels::gemm_nt>(s); }

BENCHMARK(BM_GemmReference)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_GemmBlocked)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_GemmNtReference)->Arg(64)->Arg(256);
BENCHMARK(BM_GemmNtBlocked)->Arg(64)->Arg(256);

void BM_ForwardPass(benchmark::State& state) {
  const auto g = make_genotype(6, 128, {4, 4, 4, 4, 4, 4}, {3, 3, 3, 3, 3, 3});
  const TokenGeometry geom;
  const auto net = build(g, geom, 1);
  const auto batch = synth_batch(geom, Provenance::Random, 2, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(predict_logits(net, batch.data));
}
BENCHMARK(BM_ForwardPass)->Arg(1)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_SnipScore(benchmark::State& state) {
  const auto g = make_genotype(4, 64, {3, 3, 3, 3}, {2, 2, 2, 2});
  const TokenGeometry geom;
  const auto net = build(g, geom, 1);
  const auto batch = synth_batch(geom, Provenance::Random, 2);
  for (auto _ : state) benchmark::DoNotOptimize(compute_proxy(ProxyId::Snip, net, batch, {}));
}
BENCHMARK(BM_SnipScore)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

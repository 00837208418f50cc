#include <benchmark/benchmark.h>

#include <vector>

#include "embreg/kernels.hpp"
#include "embreg/rng.hpp"

namespace k = embreg::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  embreg::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <auto Gemm>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_buffer(n * n, 1), b = random_buffer(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <auto Dist>
void BM_pairwise(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64;
  const auto p = random_buffer(n * d, 3);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    Dist(n, d, p.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n));
}

}  // namespace

BENCHMARK(BM_gemm<k::serial::gemm_nn>)->Name("gemm_nn/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_gemm<k::omp::gemm_nn>)->Name("gemm_nn/omp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_gemm<k::serial::gemm_nt>)->Name("gemm_nt/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_gemm<k::omp::gemm_nt>)->Name("gemm_nt/omp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_gemm<k::serial::gemm_tn>)->Name("gemm_tn/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_gemm<k::omp::gemm_tn>)->Name("gemm_tn/omp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_pairwise<k::serial::pairwise_distances>)->Name("pairwise/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(BM_pairwise<k::omp::pairwise_distances>)->Name("pairwise/omp")->RangeMultiplier(4)->Range(64, 1024);

BENCHMARK_MAIN();

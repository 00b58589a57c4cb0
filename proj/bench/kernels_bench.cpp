// Serial vs OpenMP dense kernels at batch/width shapes seen in training.
// Args: rows, inner, cols.
#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>
#include <vector>

#include "macflow/kernels.hpp"

namespace k = macflow::kernels;

namespace {

using Kernel = void (*)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t, bool);

std::vector<double> filled(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

// a and b are sized for the largest of the three layouts.
template <Kernel F>
void run(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto kk = static_cast<std::size_t>(state.range(1));
  const auto m = static_cast<std::size_t>(state.range(2));
  const std::size_t big = std::max({n, kk, m});
  const auto a = filled(big * big, 1), b = filled(big * big, 2);
  std::vector<double> c(big * big);
  for (auto _ : state) {
    F(a.data(), b.data(), c.data(), n, kk, m, false);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.counters["flops"] = benchmark::Counter(2.0 * n * kk * m, benchmark::Counter::kIsIterationInvariantRate);
  state.counters["threads"] = k::max_threads();
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 64, 64})->Args({256, 64, 64})->Args({64, 512, 512})->Args({1024, 512, 512});
}

}  // namespace

BENCHMARK(run<k::gemm_serial>)->Name("gemm/serial")->Apply(shapes);
BENCHMARK(run<k::gemm_parallel>)->Name("gemm/parallel")->Apply(shapes);
BENCHMARK(run<k::gemm_tn_serial>)->Name("gemm_tn/serial")->Apply(shapes);
BENCHMARK(run<k::gemm_tn_parallel>)->Name("gemm_tn/parallel")->Apply(shapes);
BENCHMARK(run<k::gemm_nt_serial>)->Name("gemm_nt/serial")->Apply(shapes);
BENCHMARK(run<k::gemm_nt_parallel>)->Name("gemm_nt/parallel")->Apply(shapes);

BENCHMARK_MAIN();

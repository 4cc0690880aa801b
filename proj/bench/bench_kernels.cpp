// Parallel kernels against the serial reference at the shapes training hits:
// a 1600-row rollout through 64-wide layers, and the per-agent hete decoders.
// Run with OMP_NUM_THREADS=N to vary the thread count.

#include <algorithm>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "shppo/kernels.hpp"

namespace k = shppo::kernels;

namespace {

std::vector<double> filled(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(gen);
  return v;
}

using Gemm = void (*)(std::span<const double>, std::span<const double>, std::span<double>,
                      std::size_t, std::size_t, std::size_t);

// Operand sizes are m*k and n*k for every layout; only indexing differs.
void bm_gemm(benchmark::State& st, Gemm f) {
  const auto m = std::size_t(st.range(0)), n = std::size_t(st.range(1)), kk = std::size_t(st.range(2));
  const auto a = filled(m * kk, 1), b = filled(n * kk, 2);
  std::vector<double> c(m * n);
  for (auto _ : st) {
    f(a, b, c, m, n, kk);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  st.SetItemsProcessed(std::int64_t(st.iterations() * m * n * kk));
  st.counters["threads"] = k::max_threads();
}

using Batched = void (*)(std::span<const double>, std::span<const double>, std::span<double>,
                         std::size_t, std::size_t, std::size_t);

void bm_matvec(benchmark::State& st, Batched f) {
  const auto batch = std::size_t(st.range(0)), m = std::size_t(st.range(1)), n = std::size_t(st.range(2));
  // Sized for both orientations; the transposed kernel reads m and writes n.
  const auto w = filled(batch * m * n, 3), x = filled(batch * std::max(m, n), 4);
  std::vector<double> y(batch * std::max(m, n));
  for (auto _ : st) {
    f(w, x, y, batch, m, n);
    benchmark::DoNotOptimize(y.data());
    benchmark::ClobberMemory();
  }
  st.SetItemsProcessed(std::int64_t(st.iterations() * batch * m * n));
}

void bm_outer(benchmark::State& st, Batched f) {
  const auto batch = std::size_t(st.range(0)), m = std::size_t(st.range(1)), n = std::size_t(st.range(2));
  const auto dy = filled(batch * m, 5), x = filled(batch * n, 6);
  std::vector<double> dw(batch * m * n);
  for (auto _ : st) {
    f(dy, x, dw, batch, m, n);
    benchmark::DoNotOptimize(dw.data());
    benchmark::ClobberMemory();
  }
  st.SetItemsProcessed(std::int64_t(st.iterations() * batch * m * n));
}

void gemm_shapes(benchmark::internal::Benchmark* b) {
  b->Args({1600, 64, 64})->Args({1600, 192, 64})->Args({64, 64, 1600})->Args({256, 256, 256});
}
void batched_shapes(benchmark::internal::Benchmark* b) {
  b->Args({1600, 64, 64})->Args({1600, 6, 64});
}

}  // namespace

BENCHMARK_CAPTURE(bm_gemm, nt_parallel, k::gemm_nt)->Apply(gemm_shapes);
BENCHMARK_CAPTURE(bm_gemm, nt_reference, k::reference::gemm_nt)->Apply(gemm_shapes);
BENCHMARK_CAPTURE(bm_gemm, nn_parallel, k::gemm_nn)->Apply(gemm_shapes);
BENCHMARK_CAPTURE(bm_gemm, nn_reference, k::reference::gemm_nn)->Apply(gemm_shapes);
BENCHMARK_CAPTURE(bm_gemm, tn_parallel, k::gemm_tn)->Apply(gemm_shapes);
BENCHMARK_CAPTURE(bm_gemm, tn_reference, k::reference::gemm_tn)->Apply(gemm_shapes);
BENCHMARK_CAPTURE(bm_matvec, parallel, k::batched_matvec)->Apply(batched_shapes);
BENCHMARK_CAPTURE(bm_matvec, reference, k::reference::batched_matvec)->Apply(batched_shapes);
BENCHMARK_CAPTURE(bm_matvec, transposed_parallel, k::batched_matvec_t)->Apply(batched_shapes);
BENCHMARK_CAPTURE(bm_matvec, transposed_reference, k::reference::batched_matvec_t)->Apply(batched_shapes);
BENCHMARK_CAPTURE(bm_outer, parallel, k::batched_outer)->Apply(batched_shapes);
BENCHMARK_CAPTURE(bm_outer, reference, k::reference::batched_outer)->Apply(batched_shapes);

BENCHMARK_MAIN();

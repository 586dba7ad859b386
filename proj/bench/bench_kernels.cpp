// Parallel kernels against the serial reference loops.
#include <benchmark/benchmark.h>

#include <vector>

#include "sepbn/kernels.hpp"
#include "sepbn/rng.hpp"

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  sepbn::RngStream rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

void BM_GemmParallel(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_values(static_cast<std::size_t>(n) * n, 1);
  const auto b = random_values(static_cast<std::size_t>(n) * n, 2);
  std::vector<float> c(static_cast<std::size_t>(n) * n);
  for (auto _ : state) {
    sepbn::kernels::gemm(n, n, n, a.data(), n, b.data(), n, c.data(), n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

void BM_GemmReference(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_values(static_cast<std::size_t>(n) * n, 1);
  const auto b = random_values(static_cast<std::size_t>(n) * n, 2);
  std::vector<float> c(static_cast<std::size_t>(n) * n);
  for (auto _ : state) {
    sepbn::reference::gemm(n, n, n, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOPS"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

// Batch of 32 images, 16 -> 16 channels, 3x3, 32x32: the first residual group.
struct ConvShape {
  int n = 32, c = 16, h = 32, w = 32, out_c = 16, k = 3;
};

void conv_forward(benchmark::State& state, bool parallel) {
  const ConvShape s;
  const auto x = random_values(static_cast<std::size_t>(s.n) * s.c * s.h * s.w, 3);
  const auto wt = random_values(static_cast<std::size_t>(s.out_c) * s.c * s.k * s.k, 4);
  std::vector<float> y(static_cast<std::size_t>(s.n) * s.out_c * s.h * s.w);
  for (auto _ : state) {
    if (parallel) {
      sepbn::kernels::conv2d_forward(x.data(), s.n, s.c, s.h, s.w, wt.data(), s.out_c, s.k, s.k, 1, 1, y.data());
    } else {
      sepbn::reference::conv2d_forward(x.data(), s.n, s.c, s.h, s.w, wt.data(), s.out_c, s.k, s.k, 1, 1,
                                       y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["GFLOPS"] =
      benchmark::Counter(2.0 * s.n * s.out_c * s.h * s.w * s.c * s.k * s.k,
                         benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

void conv_backward(benchmark::State& state, bool parallel) {
  const ConvShape s;
  const std::size_t ysize = static_cast<std::size_t>(s.n) * s.out_c * s.h * s.w;
  const auto x = random_values(static_cast<std::size_t>(s.n) * s.c * s.h * s.w, 5);
  const auto wt = random_values(static_cast<std::size_t>(s.out_c) * s.c * s.k * s.k, 6);
  const auto dy = random_values(ysize, 7);
  std::vector<float> dx(x.size()), dw(wt.size());
  for (auto _ : state) {
    if (parallel) {
      sepbn::kernels::conv2d_backward(x.data(), s.n, s.c, s.h, s.w, wt.data(), s.out_c, s.k, s.k, 1, 1,
                                      dy.data(), dx.data(), dw.data());
    } else {
      sepbn::reference::conv2d_backward(x.data(), s.n, s.c, s.h, s.w, wt.data(), s.out_c, s.k, s.k, 1,
                                        1, dy.data(), dx.data(), dw.data());
    }
    benchmark::DoNotOptimize(dx.data());
    benchmark::DoNotOptimize(dw.data());
  }
  state.counters["GFLOPS"] =
      benchmark::Counter(4.0 * s.n * s.out_c * s.h * s.w * s.c * s.k * s.k,
                         benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

void BM_ConvForwardParallel(benchmark::State& state) { conv_forward(state, true); }
void BM_ConvForwardReference(benchmark::State& state) { conv_forward(state, false); }
void BM_ConvBackwardParallel(benchmark::State& state) { conv_backward(state, true); }
void BM_ConvBackwardReference(benchmark::State& state) { conv_backward(state, false); }

}  // namespace

BENCHMARK(BM_GemmParallel)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_GemmReference)->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForwardParallel);
BENCHMARK(BM_ConvForwardReference);
BENCHMARK(BM_ConvBackwardParallel);
BENCHMARK(BM_ConvBackwardReference);

BENCHMARK_MAIN();

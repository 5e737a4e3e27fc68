#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lsenet/kernels.hpp"
#include "lsenet/ref_kernels.hpp"

// OpenMP kernels vs the serial reference loops, both in double so the
// comparison isolates the loop structure and parallelization.

namespace {

std::vector<double> rand_vec(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

constexpr int H = 88, W = 88, Cin = 16, Cout = 16, K = 3;

void bm_conv2d_omp(benchmark::State& state) {
  const auto in = rand_vec(static_cast<size_t>(H) * W * Cin, 1);
  const auto w = rand_vec(static_cast<size_t>(K) * K * Cin * Cout, 2);
  const auto b = rand_vec(Cout, 3);
  std::vector<double> out(static_cast<size_t>(H) * W * Cout);
  for (auto _ : state) {
    lsenet::kernels::conv2d_forward(in.data(), H, W, Cin, w.data(), K, Cout,
                                    b.data(), out.data(), K / 2, H, W);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(bm_conv2d_omp);

void bm_conv2d_ref(benchmark::State& state) {
  const auto in = rand_vec(static_cast<size_t>(H) * W * Cin, 1);
  const auto w = rand_vec(static_cast<size_t>(K) * K * Cin * Cout, 2);
  const auto b = rand_vec(Cout, 3);
  for (auto _ : state) {
    auto out = lsenet::ref::conv2d(in, H, W, Cin, w, K, Cout, b, K / 2, H, W);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(bm_conv2d_ref);

void bm_maxpool_omp(benchmark::State& state) {
  const auto in = rand_vec(static_cast<size_t>(H) * W * Cin, 4);
  std::vector<double> out(static_cast<size_t>(H / 2) * (W / 2) * Cin);
  std::vector<int32_t> argmax(out.size());
  for (auto _ : state) {
    lsenet::kernels::maxpool_forward(in.data(), H, W, Cin, 2, out.data(),
                                     argmax.data());
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(bm_maxpool_omp);

void bm_maxpool_ref(benchmark::State& state) {
  const auto in = rand_vec(static_cast<size_t>(H) * W * Cin, 4);
  for (auto _ : state) {
    auto out = lsenet::ref::maxpool(in, H, W, Cin, 2);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(bm_maxpool_ref);

void bm_bilinear_omp(benchmark::State& state) {
  constexpr int h = 8, w = 8, C = 12, f = 11;
  const auto in = rand_vec(static_cast<size_t>(h) * w * C, 5);
  std::vector<double> out(static_cast<size_t>(h * f) * (w * f) * C);
  for (auto _ : state) {
    lsenet::kernels::upsample_bilinear_forward(in.data(), h, w, C, f, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(bm_bilinear_omp);

void bm_bilinear_ref(benchmark::State& state) {
  constexpr int h = 8, w = 8, C = 12, f = 11;
  const auto in = rand_vec(static_cast<size_t>(h) * w * C, 5);
  for (auto _ : state) {
    auto out = lsenet::ref::upsample_bilinear(in, h, w, C, f);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(bm_bilinear_ref);

}  // namespace

BENCHMARK_MAIN();

// Optimised kernels against the serial reference at the shapes the desk and
// paper profiles actually run. Thread count follows OMP_NUM_THREADS.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lcn4/kernels.hpp"
#include "lcn4/kernels_serial.hpp"

namespace k = lcn4::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) v = u(rng);
  return out;
}

template <bool Serial>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_buffer(n * n, 1), b = random_buffer(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    if constexpr (Serial) {
      k::serial::gemm_nn(n, n, n, a.data(), n, b.data(), n, c.data(), n);
    } else {
      k::gemm_nn(n, n, n, a.data(), n, b.data(), n, c.data(), n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}

// args: batch, in channels, out channels, spatial size
template <bool Serial>
void BM_Conv(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const k::ConvGeometry g{static_cast<std::size_t>(state.range(1)), static_cast<std::size_t>(state.range(3)),
                          static_cast<std::size_t>(state.range(3)), 3};
  const auto out_ch = static_cast<std::size_t>(state.range(2));
  const auto in = random_buffer(batch * g.channels * g.height * g.width, 3);
  const auto kernel = random_buffer(out_ch * g.channels * 9, 4);
  std::vector<double> out(batch * out_ch * g.height * g.width);
  for (auto _ : state) {
    if constexpr (Serial) {
      k::serial::conv2d_forward(batch, g, out_ch, in.data(), kernel.data(), out.data());
    } else {
      k::conv2d_forward(batch, g, out_ch, in.data(), kernel.data(), out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Serial>
void BM_Maxpool(benchmark::State& state) {
  const auto planes = static_cast<std::size_t>(state.range(0)), side = static_cast<std::size_t>(state.range(1));
  const auto in = random_buffer(planes * side * side, 5);
  std::vector<double> out(planes * side * side / 4);
  std::vector<std::size_t> arg(out.size());
  for (auto _ : state) {
    if constexpr (Serial) {
      k::serial::maxpool2x2_forward(planes, side, side, in.data(), out.data(), arg.data());
    } else {
      k::maxpool2x2_forward(planes, side, side, in.data(), out.data(), arg.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
}

// args: cells, clusters, channels
template <bool Serial>
void BM_Distances(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), c = static_cast<std::size_t>(state.range(1)),
             d = static_cast<std::size_t>(state.range(2));
  const auto u = random_buffer(n * d, 6), centres = random_buffer(c * d, 7);
  std::vector<double> out(n * c);
  for (auto _ : state) {
    if constexpr (Serial) {
      k::serial::pairwise_euclidean(n, c, d, u.data(), centres.data(), out.data());
    } else {
      k::pairwise_euclidean(n, c, d, u.data(), centres.data(), out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
}

// args: rows, length (softmax over the last axis)
template <bool Serial>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), len = static_cast<std::size_t>(state.range(1));
  const auto in = random_buffer(rows * len, 8);
  std::vector<double> out(in.size());
  for (auto _ : state) {
    if constexpr (Serial) {
      k::serial::softmax_axis(rows, len, 1, in.data(), out.data());
    } else {
      k::softmax_axis(rows, len, 1, in.data(), out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/serial")->Arg(64)->Arg(256);
// First block at 84x84 (desk and paper), third block of the paper profile.
BENCHMARK(BM_Conv<false>)->Name("conv3x3/parallel")->Args({16, 3, 8, 84})->Args({16, 3, 64, 84})->Args({16, 64, 64, 21});
BENCHMARK(BM_Conv<true>)->Name("conv3x3/serial")->Args({16, 3, 8, 84})->Args({16, 3, 64, 84})->Args({16, 64, 64, 21});
BENCHMARK(BM_Maxpool<false>)->Name("maxpool/parallel")->Args({16 * 64, 84});
BENCHMARK(BM_Maxpool<true>)->Name("maxpool/serial")->Args({16 * 64, 84});
BENCHMARK(BM_Distances<false>)->Name("distances/parallel")->Args({16 * 42 * 42, 16, 8})->Args({16 * 21 * 21, 64, 64});
BENCHMARK(BM_Distances<true>)->Name("distances/serial")->Args({16 * 42 * 42, 16, 8})->Args({16 * 21 * 21, 64, 64});
// Attention rows: batch x heads x tokens, over tokens.
BENCHMARK(BM_Softmax<false>)->Name("softmax/parallel")->Args({16 * 8 * 100, 100});
BENCHMARK(BM_Softmax<true>)->Name("softmax/serial")->Args({16 * 8 * 100, 100});

BENCHMARK_MAIN();

// Serial against OpenMP kernels on the shapes the trainer and the metrics use.
// The argument is the number of rows.

#include <benchmark/benchmark.h>

#include "bnnlv/kernels.hpp"
#include "bnnlv/rng.hpp"

namespace {

using namespace bnnlv;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.normal();
  return m;
}

struct MlpCase {
  Architecture arch{1, 1, {50}, 1, 0.01};
  std::vector<double> w;
  Matrix x, z, y;

  explicit MlpCase(std::size_t n) : x(random_matrix(n, 1, 1)), z(random_matrix(n, 1, 2)), y(random_matrix(n, 1, 3)) {
    Rng rng(4);
    w.resize(arch.parameter_count());
    for (auto& v : w) v = 0.3 * rng.normal();
  }
};

template <auto Kernel>
void bm_mlp_sse_grad(benchmark::State& state) {
  const MlpCase c(static_cast<std::size_t>(state.range(0)));
  std::vector<double> gw(c.w.size());
  Matrix gz;
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(c.arch, c.w, c.x, c.z, c.y, gw, &gz));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Kernel>
void bm_hz(benchmark::State& state) {
  const Matrix p = random_matrix(static_cast<std::size_t>(state.range(0)), 2, 5);
  Matrix grad;
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(p, 1e-6, &grad));
}

template <auto Kernel>
void bm_ksg(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix x = random_matrix(n, 1, 6), y = random_matrix(n, 1, 7);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(x, y, 5));
}

}  // namespace

BENCHMARK(bm_mlp_sse_grad<kernels::serial::mlp_sse_grad>)->Arg(300)->Arg(3000);
BENCHMARK(bm_mlp_sse_grad<kernels::omp::mlp_sse_grad>)->Arg(300)->Arg(3000);
BENCHMARK(bm_hz<kernels::serial::hz_statistic>)->Arg(300)->Arg(1000);
BENCHMARK(bm_hz<kernels::omp::hz_statistic>)->Arg(300)->Arg(1000);
BENCHMARK(bm_ksg<kernels::serial::ksg_counts>)->Arg(300)->Arg(3000);
BENCHMARK(bm_ksg<kernels::omp::ksg_counts>)->Arg(300)->Arg(3000);

BENCHMARK_MAIN();

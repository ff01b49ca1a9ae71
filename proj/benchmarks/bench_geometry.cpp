#include <benchmark/benchmark.h>

#include "subtomo/geometry.hpp"
#include "subtomo/random.hpp"

namespace {

using namespace subtomo;

void BM_SampleDenseCut(benchmark::State& state) {
  const int D = static_cast<int>(state.range(0));
  const int d = D / 4;
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(sample_cut(D, d, D, rng));
}
BENCHMARK(BM_SampleDenseCut)->Arg(64)->Arg(256)->Arg(1024);

void BM_SampleSparseCut(benchmark::State& state) {
  const int D = static_cast<int>(state.range(0));
  Rng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(sample_cut(D, D / 4, 1, rng));
}
BENCHMARK(BM_SampleSparseCut)->Arg(64)->Arg(256)->Arg(1024);

void BM_ClosestDistance(benchmark::State& state) {
  const int D = static_cast<int>(state.range(0));
  Rng rng(3);
  AffineCut a = sample_cut(D, D / 4, D, rng);
  AffineCut b = sample_cut(D, D / 4, D, rng);
  a.offset = standard_normal_vector(D, rng);
  b.offset = standard_normal_vector(D, rng);
  for (auto _ : state) benchmark::DoNotOptimize(measure_closest_distance(a, b));
}
BENCHMARK(BM_ClosestDistance)->Arg(64)->Arg(256);

void BM_PointCloudWidth(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(4);
  const Eigen::MatrixXd points = standard_normal_matrix(n, 64, rng);
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_width_of_points(points, 1000, rng));
}
BENCHMARK(BM_PointCloudWidth)->Arg(100)->Arg(1000);

}  // namespace

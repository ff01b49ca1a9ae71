#include <benchmark/benchmark.h>

#include <random>

#include "subtomo/fitting.hpp"
#include "subtomo/random.hpp"

namespace {

using namespace subtomo;

std::vector<CurvePoint> noisy_curve(int repeats) {
  const FitParams truth{0.0, 1.0, 30.0, 0.3};
  Rng rng(1);
  std::normal_distribution<double> noise(0.0, 0.03);
  std::vector<CurvePoint> pts;
  for (int r = 0; r < repeats; ++r)
    for (double d : {1, 2, 4, 8, 12, 16, 24, 32, 48, 64}) {
      const double p = sigmoid_curve(truth, d) + noise(rng);
      pts.push_back({d, std::min(1.0, std::max(0.0, p))});
    }
  return pts;
}

void BM_FitProbCurve(benchmark::State& state) {
  const auto pts = noisy_curve(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_prob_curve(pts));
}
BENCHMARK(BM_FitProbCurve)->Arg(1)->Arg(10);

void BM_ExtractDstar(benchmark::State& state) {
  const auto fit = fit_prob_curve(noisy_curve(10));
  for (auto _ : state) benchmark::DoNotOptimize(extract_dstar(fit, 0.5, 64));
}
BENCHMARK(BM_ExtractDstar);

}  // namespace

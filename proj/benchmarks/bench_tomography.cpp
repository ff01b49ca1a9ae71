#include <benchmark/benchmark.h>

#include "subtomo/fields.hpp"
#include "subtomo/geometry.hpp"
#include "subtomo/random.hpp"
#include "subtomo/tomography.hpp"

namespace {

using namespace subtomo;

// One probe on a slab field; the cut dimension sets how much of the step
// budget Adam needs.
void BM_SlabProbe(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Rng rng(1);
  AffineCut planted = sample_cut(64, 48, 64, rng);
  const SlabField field(planted, 1.0, 0, 2);
  const auto target = one_hot_target(0, 2);
  const auto offsets = OffsetPolicy::gaussian(1.0);
  ProbeConfig config;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(probe(field, d, target, offsets, config, seed++));
}
BENCHMARK(BM_SlabProbe)->Arg(4)->Arg(16)->Arg(32);

void BM_SlabSweep(benchmark::State& state) {
  Rng rng(2);
  const SlabField field(sample_cut(64, 48, 64, rng), 1.0, 0, 2);
  SweepConfig config;
  config.dims = {1, 2, 4, 8, 12, 16, 24, 32, 48, 64};
  config.repeats = 4;
  config.threads = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(sweep(field, one_hot_target(0, 2), OffsetPolicy::gaussian(1.0), config));
}
BENCHMARK(BM_SlabSweep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

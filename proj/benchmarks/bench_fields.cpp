#include <benchmark/benchmark.h>

#include "subtomo/fields.hpp"
#include "subtomo/geometry.hpp"
#include "subtomo/neuralnet.hpp"
#include "subtomo/random.hpp"

namespace {

using namespace subtomo;

void BM_SlabGradient(benchmark::State& state) {
  const int D = static_cast<int>(state.range(0));
  Rng rng(1);
  const SlabField field(sample_cut(D, D / 2, D, rng), 1.0, 0, 2);
  const Eigen::VectorXd x = standard_normal_vector(D, rng);
  const Eigen::VectorXd target = Eigen::Vector2d(1.0, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(field.loss_and_input_gradient(x, target));
}
BENCHMARK(BM_SlabGradient)->Arg(64)->Arg(512);

void BM_MlpInputGradient(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  Rng rng(2);
  const MlpModel model = MlpModel::he_initialized({32, width, width, 10}, rng);
  const Eigen::VectorXd x = standard_normal_vector(32, rng);
  const Eigen::VectorXd target = Eigen::VectorXd::Constant(10, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(model.loss_and_input_gradient(x, target));
}
BENCHMARK(BM_MlpInputGradient)->Arg(64)->Arg(256);

void BM_MlpParameterGradient(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Rng rng(3);
  const MlpModel model = MlpModel::he_initialized({32, 64, 64, 4}, rng);
  const Eigen::MatrixXd inputs = standard_normal_matrix(batch, 32, rng);
  std::vector<int> labels(batch);
  for (int i = 0; i < batch; ++i) labels[i] = i % 4;
  MlpModel::ParameterGradient grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.loss_and_parameter_gradient(inputs, labels, 1e-4, grad));
}
BENCHMARK(BM_MlpParameterGradient)->Arg(32)->Arg(256);

}  // namespace

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "subtomo/datasets.hpp"
#include "subtomo/geometry.hpp"
#include "subtomo/random.hpp"

namespace subtomo {

// Eigenvalues of the sample covariance (1 / (N - 1), mean-centered),
// descending and clipped at zero.
struct SpectrumSummary {
  Eigen::VectorXd eigenvalues;
  double total_variance = 0.0;
};

SpectrumSummary covariance_spectrum(const Eigen::MatrixXd& inputs);

// Smallest m whose top-m eigenvalues hold >= `fraction` of the variance.
// 0 for zero-variance data.
int pca_dim(const SpectrumSummary& spectrum, double fraction = 0.9);
int pca_dim_90(const Eigen::MatrixXd& inputs);

struct ParticipationRatio {
  double value = 0.0;
  bool zero_variance = false;
};

// (sum lambda)^2 / sum lambda^2.
ParticipationRatio participation_ratio(const SpectrumSummary& spectrum);
ParticipationRatio participation_ratio(const Eigen::MatrixXd& inputs);

enum class DataWidthOracle {
  // Support of the projected sample itself: exact for the stored points, a
  // lower bound for the set they were drawn from.
  sample_max,
  // Support of the unit sphere of the linear span of the projected points:
  // the dense-sampling limit for data filling a subspace through X0, an
  // upper bound otherwise.
  span_sphere,
};

struct DataEffectiveDimension {
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  WidthEstimate width;
};

// w^2 of the data projected onto the unit sphere around `center`.
DataEffectiveDimension data_effective_dimension(
    const Eigen::MatrixXd& inputs, const Eigen::VectorXd& center, int n_directions, Rng& rng,
    DataWidthOracle oracle = DataWidthOracle::sample_max);

struct MarginalEffectiveDimension {
  double mean = 0.0;
  double spread = 0.0;  // sample standard deviation across draws
  std::vector<double> per_draw;
};

// Averages data_effective_dimension over n_draws centers picked uniformly
// (without replacement when possible) from the rows of `center_pool`.
MarginalEffectiveDimension marginal_effective_dimension(
    const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& center_pool, int n_draws,
    int n_directions, Rng& rng, DataWidthOracle oracle = DataWidthOracle::sample_max);

struct ClassMetrics {
  int cls = 0;
  int pca90 = 0;
  double participation = 0.0;
  double d_effective_mean = 0.0;
  double d_effective_spread = 0.0;
};

struct DatasetMetricsConfig {
  int n_directions = 2000;
  int center_draws = 8;
  DataWidthOracle oracle = DataWidthOracle::sample_max;
  int threads = 1;
};

// Per-class measures. Centers for class c come from rows of other classes
// (falling back to Gaussian points around the data mean when there are
// none). Class c uses Rng(derive_seed(seed, c)).
std::vector<ClassMetrics> dataset_metrics(const Dataset& data, const DatasetMetricsConfig& config,
                                          std::uint64_t seed);

// Header: class,pca90,participation,d_effective_mean,d_effective_spread
std::string metrics_csv(const std::vector<ClassMetrics>& rows);

}  // namespace subtomo

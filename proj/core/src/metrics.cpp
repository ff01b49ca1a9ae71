#include "subtomo/metrics.hpp"
#include "subtomo/format.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "subtomo/error.hpp"
#include "subtomo/parallel.hpp"

namespace subtomo {

SpectrumSummary covariance_spectrum(const Eigen::MatrixXd& inputs) {
  if (inputs.rows() < 2) throw InvalidArgument("spectrum needs at least 2 samples");
  const Eigen::MatrixXd centered = inputs.rowwise() - inputs.colwise().mean();
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(inputs.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  SpectrumSummary out;
  out.eigenvalues = eig.eigenvalues().reverse().cwiseMax(0.0);
  out.total_variance = cov.trace();
  return out;
}

int pca_dim(const SpectrumSummary& spectrum, double fraction) {
  const double total = spectrum.eigenvalues.sum();
  if (!(total > 0.0)) return 0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < spectrum.eigenvalues.size(); ++i) {
    acc += spectrum.eigenvalues[i];
    // Relative slack absorbs round-off for exactly low-rank data.
    if (acc >= fraction * total * (1.0 - 1e-12)) return static_cast<int>(i + 1);
  }
  return static_cast<int>(spectrum.eigenvalues.size());
}

int pca_dim_90(const Eigen::MatrixXd& inputs) { return pca_dim(covariance_spectrum(inputs), 0.9); }

ParticipationRatio participation_ratio(const SpectrumSummary& spectrum) {
  const double sum = spectrum.eigenvalues.sum();
  const double sum_sq = spectrum.eigenvalues.squaredNorm();
  if (!(sum_sq > 0.0)) return {0.0, true};
  return {sum * sum / sum_sq, false};
}

ParticipationRatio participation_ratio(const Eigen::MatrixXd& inputs) {
  return participation_ratio(covariance_spectrum(inputs));
}

namespace {

// Orthonormal basis (rows) of the span of the rows of `points`.
Eigen::MatrixXd row_span_basis(const Eigen::MatrixXd& points) {
  const Eigen::MatrixXd gram = points.transpose() * points;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double top = eig.eigenvalues().maxCoeff();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i)
    if (eig.eigenvalues()[i] > 1e-10 * top) keep.push_back(i);
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(keep.size()), points.cols());
  for (std::size_t r = 0; r < keep.size(); ++r)
    basis.row(static_cast<Eigen::Index>(r)) = eig.eigenvectors().col(keep[r]).transpose();
  return basis;
}

}  // namespace

DataEffectiveDimension data_effective_dimension(const Eigen::MatrixXd& inputs,
                                                const Eigen::VectorXd& center, int n_directions,
                                                Rng& rng, DataWidthOracle oracle) {
  if (inputs.rows() < 2) throw InvalidArgument("effective dimension needs at least 2 samples");
  // Unit vectors (x - X0) / |x - X0|; width is translation invariant so the
  // center itself can be dropped.
  const Eigen::MatrixXd directions = project_to_sphere(inputs, center).rowwise() - center.transpose();

  WidthEstimate width;
  if (oracle == DataWidthOracle::sample_max) {
    width = gaussian_width_of_points(directions, n_directions, rng);
  } else {
    width = gaussian_width(subspace_sphere_oracle(row_span_basis(directions)),
                           static_cast<int>(inputs.cols()), n_directions, rng);
  }
  const EffectiveDimension e = effective_dimension(width);
  return {e.value, e.lo, e.hi, width};
}

MarginalEffectiveDimension marginal_effective_dimension(const Eigen::MatrixXd& inputs,
                                                        const Eigen::MatrixXd& center_pool,
                                                        int n_draws, int n_directions, Rng& rng,
                                                        DataWidthOracle oracle) {
  if (n_draws < 1) throw InvalidArgument("need at least one center draw");
  if (center_pool.rows() < 1) throw InvalidArgument("center pool is empty");
  std::vector<Eigen::Index> order(center_pool.rows());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  MarginalEffectiveDimension out;
  for (int k = 0; k < n_draws; ++k) {
    const Eigen::VectorXd center = center_pool.row(order[k % order.size()]).transpose();
    out.per_draw.push_back(data_effective_dimension(inputs, center, n_directions, rng, oracle).value);
  }
  const double n = static_cast<double>(out.per_draw.size());
  out.mean = std::accumulate(out.per_draw.begin(), out.per_draw.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : out.per_draw) ss += (v - out.mean) * (v - out.mean);
  out.spread = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return out;
}

std::vector<ClassMetrics> dataset_metrics(const Dataset& data, const DatasetMetricsConfig& config,
                                          std::uint64_t seed) {
  validate(data);
  std::vector<ClassMetrics> rows(data.class_count);
  parallel_for(rows.size(), config.threads, [&](std::size_t c) {
    const int cls = static_cast<int>(c);
    ClassMetrics& row = rows[c];
    row.cls = cls;
    const Dataset members = data.class_subset(cls);
    if (members.size() < 2) return;
    const SpectrumSummary spectrum = covariance_spectrum(members.inputs);
    row.pca90 = pca_dim(spectrum, 0.9);
    row.participation = participation_ratio(spectrum).value;

    Rng rng(derive_seed(seed, c));
    const std::vector<int> excluded{cls};
    const auto pool_rows = offset_pool(data, excluded);
    Eigen::MatrixXd pool;
    if (pool_rows.empty()) {
      pool.resize(config.center_draws, data.dim());
      const Eigen::RowVectorXd mean = members.inputs.colwise().mean();
      for (int k = 0; k < config.center_draws; ++k)
        pool.row(k) = mean + standard_normal_vector(data.dim(), rng).transpose();
    } else {
      pool = data.select(pool_rows).inputs;
    }
    const auto marginal = marginal_effective_dimension(members.inputs, pool, config.center_draws,
                                                       config.n_directions, rng, config.oracle);
    row.d_effective_mean = marginal.mean;
    row.d_effective_spread = marginal.spread;
  });
  return rows;
}

std::string metrics_csv(const std::vector<ClassMetrics>& rows) {
  std::ostringstream os;
  auto put = [&os](double v) { os << format_double(v); };
  os << "class,pca90,participation,d_effective_mean,d_effective_spread\n";
  for (const auto& r : rows) {
    os << r.cls << ',' << r.pca90 << ',';
    put(r.participation);
    os << ',';
    put(r.d_effective_mean);
    os << ',';
    put(r.d_effective_spread);
    os << '\n';
  }
  return os.str();
}

}  // namespace subtomo

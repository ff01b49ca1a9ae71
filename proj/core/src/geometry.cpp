#include "subtomo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "subtomo/error.hpp"

namespace subtomo {

namespace {

constexpr int kMaxResamples = 16;
constexpr double kCollapseTolerance = 1e-10;

}  // namespace

Eigen::MatrixXd orthonormalize_rows(Eigen::MatrixXd rows) {
  // Columns of the transpose are contiguous; each new vector is projected off
  // the accepted ones twice (CGS2).
  Eigen::MatrixXd q = rows.transpose();
  for (Eigen::Index i = 0; i < q.cols(); ++i) {
    auto v = q.col(i);
    const double original = v.norm();
    if (original == 0.0) throw DegenerateBasis("zero row " + std::to_string(i));
    if (i > 0) {
      const auto done = q.leftCols(i);
      for (int pass = 0; pass < 2; ++pass) v.noalias() -= done * (done.transpose() * v);
    }
    const double norm = v.norm();
    if (!(norm > kCollapseTolerance * original))
      throw DegenerateBasis("row " + std::to_string(i) + " is linearly dependent on earlier rows");
    v /= norm;
  }
  return q.transpose();
}

AffineCut sample_cut(int ambient_dim, int cut_dim, int sparsity, Rng& rng) {
  if (ambient_dim < 1 || cut_dim < 1 || cut_dim > ambient_dim)
    throw InvalidDimension("cut dimension " + std::to_string(cut_dim) +
                           " must lie in [1, " + std::to_string(ambient_dim) + "]");
  if (sparsity < 1) throw InvalidDimension("sparsity must be at least 1");
  const int k = std::min(sparsity, ambient_dim);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<int> perm(ambient_dim);

  for (int attempt = 0; attempt < kMaxResamples; ++attempt) {
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(cut_dim, ambient_dim);
    if (k == ambient_dim) {
      for (int r = 0; r < cut_dim; ++r)
        for (int c = 0; c < ambient_dim; ++c) rows(r, c) = normal(rng);
    } else {
      int cursor = ambient_dim;  // forces a shuffle on first use
      for (int r = 0; r < cut_dim; ++r) {
        for (int j = 0; j < k; ++j) {
          if (cursor == ambient_dim) {
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            cursor = 0;
          }
          const int coord = perm[cursor++];
          if (rows(r, coord) != 0.0) {
            // Wrapped into a new permutation and drew a coordinate twice.
            --j;
            continue;
          }
          double value = 0.0;
          while (value == 0.0) value = normal(rng);
          rows(r, coord) = value;
        }
      }
    }
    try {
      AffineCut cut;
      cut.basis = orthonormalize_rows(std::move(rows));
      cut.offset = Eigen::VectorXd::Zero(ambient_dim);
      cut.sparsity = k;
      return cut;
    } catch (const DegenerateBasis&) {
      // resample
    }
  }
  throw DegenerateBasis("could not draw a full-rank basis in " + std::to_string(kMaxResamples) +
                        " attempts (D=" + std::to_string(ambient_dim) +
                        ", d=" + std::to_string(cut_dim) + ", k=" + std::to_string(k) + ")");
}

Eigen::VectorXd embed(const AffineCut& cut, const Eigen::VectorXd& coords) {
  if (coords.size() != cut.cut_dim())
    throw InvalidDimension("embed: expected " + std::to_string(cut.cut_dim()) +
                           " coordinates, got " + std::to_string(coords.size()));
  return cut.basis.transpose() * coords + cut.offset;
}

Eigen::VectorXd extract(const AffineCut& cut, const Eigen::VectorXd& x) {
  if (x.size() != cut.ambient_dim())
    throw InvalidDimension("extract: point has wrong ambient dimension");
  return cut.basis * (x - cut.offset);
}

double distance_to_cut(const AffineCut& cut, const Eigen::VectorXd& x) {
  if (x.size() != cut.ambient_dim())
    throw InvalidDimension("distance_to_cut: point has wrong ambient dimension");
  const Eigen::VectorXd rel = x - cut.offset;
  const Eigen::VectorXd residual = rel - cut.basis.transpose() * (cut.basis * rel);
  return residual.norm();
}

Eigen::MatrixXd project_to_sphere(const Eigen::MatrixXd& points, const Eigen::VectorXd& center) {
  if (points.cols() != center.size())
    throw InvalidDimension("project_to_sphere: center has wrong dimension");
  Eigen::MatrixXd out(points.rows(), points.cols());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Eigen::VectorXd rel = points.row(i).transpose() - center;
    const double norm = rel.norm();
    if (norm == 0.0) throw ZeroNorm("point " + std::to_string(i) + " coincides with the center");
    out.row(i) = (center + rel / norm).transpose();
  }
  return out;
}

SupportOracle point_cloud_oracle(Eigen::MatrixXd points) {
  if (points.rows() == 0) throw InvalidArgument("point cloud is empty");
  return [pts = std::move(points)](const Eigen::VectorXd& g) { return (pts * g).maxCoeff(); };
}

SupportOracle sphere_oracle() {
  return [](const Eigen::VectorXd& g) { return g.norm(); };
}

SupportOracle subspace_sphere_oracle(Eigen::MatrixXd basis) {
  return [b = std::move(basis)](const Eigen::VectorXd& g) { return (b * g).norm(); };
}

namespace {

WidthEstimate summarize(const std::vector<double>& samples) {
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return {mean, sd / std::sqrt(n), static_cast<int>(samples.size())};
}

}  // namespace

WidthEstimate gaussian_width(const SupportOracle& oracle, int ambient_dim, int n_directions,
                             Rng& rng) {
  if (n_directions < 2) throw InvalidArgument("gaussian_width needs at least 2 directions");
  if (ambient_dim < 1) throw InvalidDimension("ambient dimension must be positive");
  std::vector<double> samples(n_directions);
  for (int i = 0; i < n_directions; ++i) samples[i] = oracle(standard_normal_vector(ambient_dim, rng));
  WidthEstimate est = summarize(samples);
  // Support of a set containing the origin is non-negative; guard round-off for {0}.
  est.width = std::max(est.width, 0.0);
  return est;
}

WidthEstimate gaussian_width_of_points(const Eigen::MatrixXd& points, int n_directions, Rng& rng) {
  if (n_directions < 2) throw InvalidArgument("gaussian_width needs at least 2 directions");
  if (points.rows() == 0) throw InvalidArgument("point cloud is empty");
  constexpr int kChunk = 256;
  const Eigen::Index dim = points.cols();
  std::vector<double> samples;
  samples.reserve(n_directions);
  for (int start = 0; start < n_directions; start += kChunk) {
    const int rows = std::min(kChunk, n_directions - start);
    const Eigen::MatrixXd g = standard_normal_matrix(rows, dim, rng);
    const Eigen::MatrixXd dots = g * points.transpose();
    for (int r = 0; r < rows; ++r)
      samples.push_back(0.5 * (dots.row(r).maxCoeff() - dots.row(r).minCoeff()));
  }
  WidthEstimate est = summarize(samples);
  est.width = std::max(est.width, 0.0);
  return est;
}

EffectiveDimension effective_dimension(const WidthEstimate& width) {
  const double w = width.width;
  const double lo = std::max(0.0, w - 2.0 * width.std_error);
  const double hi = w + 2.0 * width.std_error;
  return {w * w, lo * lo, hi * hi};
}

std::optional<double> gordon_miss_bound(int codim, double width) {
  if (codim < 1) throw InvalidDimension("codimension must be at least 1");
  if (width < 0.0) throw InvalidArgument("width must be non-negative");
  const double a_k = std::sqrt(static_cast<double>(codim));
  if (width >= a_k) return std::nullopt;
  const double gap = a_k - width;
  const double bound = 1.0 - 3.5 * std::exp(-gap * gap / 18.0);
  if (bound <= 0.0) return std::nullopt;
  return bound;
}

ClosestApproachScale expected_closest_distance(int ambient_dim, int dim_a, int dim_b) {
  if (ambient_dim < 1 || dim_a < 0 || dim_b < 0 || dim_a > ambient_dim || dim_b > ambient_dim)
    throw InvalidDimension("closest distance: dimensions must satisfy 0 <= n, d <= D");
  const int slack = ambient_dim - dim_a - dim_b;
  if (slack <= 0) return {true, 0.0};
  return {false, std::sqrt(static_cast<double>(slack)) / std::sqrt(static_cast<double>(ambient_dim))};
}

ClosestDistance measure_closest_distance(const AffineCut& a, const AffineCut& b,
                                         const ClosestDistanceConfig& config) {
  if (a.ambient_dim() != b.ambient_dim())
    throw InvalidDimension("closest distance: cuts live in different ambient spaces");
  const Eigen::Index da = a.cut_dim();
  const Eigen::Index db = b.cut_dim();
  const Eigen::Index dim = a.ambient_dim();

  // Residual X_a - X_b = A x - rhs with A = [M_a^T, -M_b^T], rhs = X0_b - X0_a.
  Eigen::MatrixXd A(dim, da + db);
  A.leftCols(da) = a.basis.transpose();
  A.rightCols(db) = -b.basis.transpose();
  const Eigen::VectorXd rhs = b.offset - a.offset;

  const int budget =
      config.max_iterations > 0 ? config.max_iterations : static_cast<int>(4 * (da + db) + 64);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(da + db);
  Eigen::VectorXd r = rhs;
  Eigen::VectorXd s = A.transpose() * r;
  Eigen::VectorXd p = s;
  double gamma = s.squaredNorm();

  ClosestDistance out;
  int it = 0;
  while (std::sqrt(gamma) > config.gradient_tolerance && it < budget) {
    const Eigen::VectorXd q = A * p;
    const double qq = q.squaredNorm();
    if (qq == 0.0) break;
    const double alpha = gamma / qq;
    x += alpha * p;
    r -= alpha * q;
    s = A.transpose() * r;
    const double gamma_next = s.squaredNorm();
    p = s + (gamma_next / gamma) * p;
    gamma = gamma_next;
    ++it;
  }
  // Recompute the residual from x to shed accumulated recurrence drift.
  out.distance = (A * x - rhs).norm();
  out.iterations = it;
  out.converged = (A.transpose() * (A * x - rhs)).norm() <= config.gradient_tolerance;
  return out;
}

}  // namespace subtomo

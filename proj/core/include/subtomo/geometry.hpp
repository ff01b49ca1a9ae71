#pragma once

#include <functional>
#include <optional>

#include <Eigen/Core>

#include "subtomo/random.hpp"

namespace subtomo {

// A d-dimensional affine subspace X(theta) = theta * M + X0 of R^D.
// `basis` holds the d orthonormal rows of M.
struct AffineCut {
  Eigen::MatrixXd basis;
  Eigen::VectorXd offset;
  int sparsity = 0;

  int ambient_dim() const { return static_cast<int>(basis.cols()); }
  int cut_dim() const { return static_cast<int>(basis.rows()); }
};

// Orthonormalizes the rows in order using classical Gram-Schmidt with a
// second re-orthogonalization pass. Throws DegenerateBasis when a row
// collapses (relative norm below 1e-10 after projection).
Eigen::MatrixXd orthonormalize_rows(Eigen::MatrixXd rows);

// Random cut with offset zero. With sparsity == ambient_dim the rows are
// Gaussian before orthonormalization, so the span is rotation invariant.
// With sparsity k < D each row gets k coordinates; supports are drawn by
// walking a random permutation of the coordinates (a fresh permutation each
// time one is exhausted), so rows are disjoint whenever d * k <= D and keep
// exactly k non-zeros. Rank-deficient draws are resampled up to 16 times.
AffineCut sample_cut(int ambient_dim, int cut_dim, int sparsity, Rng& rng);

Eigen::VectorXd embed(const AffineCut& cut, const Eigen::VectorXd& coords);

// Inverse of embed on the cut: (x - X0) M^T.
Eigen::VectorXd extract(const AffineCut& cut, const Eigen::VectorXd& x);

// Euclidean distance from x to the affine span of the cut.
double distance_to_cut(const AffineCut& cut, const Eigen::VectorXd& x);

// Row-wise X0 + (x - X0) / |x - X0|. Throws ZeroNorm if a row equals X0.
Eigen::MatrixXd project_to_sphere(const Eigen::MatrixXd& points, const Eigen::VectorXd& center);

// g -> max_{x in S} g . x. Must be positively homogeneous in g.
using SupportOracle = std::function<double(const Eigen::VectorXd&)>;

// Exact support of a finite set (rows of `points`). For a sample of a
// continuous set this is a lower bound on the set's support function.
SupportOracle point_cloud_oracle(Eigen::MatrixXd points);
// Unit sphere around the origin: |g|.
SupportOracle sphere_oracle();
// Unit sphere of the linear span of the orthonormal rows of `basis`: |basis g|.
SupportOracle subspace_sphere_oracle(Eigen::MatrixXd basis);

struct WidthEstimate {
  double width = 0.0;
  double std_error = 0.0;
  int n_directions = 0;
};

// Monte Carlo mean of oracle(g) over g ~ N(0, I_D).
WidthEstimate gaussian_width(const SupportOracle& oracle, int ambient_dim, int n_directions,
                             Rng& rng);

// Point-cloud width in the half-diameter form
//   w = 1/2 E max_{x,y} g . (x - y) = 1/2 E [max_x g . x - min_x g . x],
// batched through a matrix product. Equal in expectation to gaussian_width
// with point_cloud_oracle, but invariant to translating the cloud, so a
// single point has width exactly 0.
WidthEstimate gaussian_width_of_points(const Eigen::MatrixXd& points, int n_directions, Rng& rng);

struct EffectiveDimension {
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

// w^2 with band [(w - 2 se)^2, (w + 2 se)^2], lower end clipped at zero width.
EffectiveDimension effective_dimension(const WidthEstimate& width);

// Lower bound on Pr(random codim-k linear subspace misses S) for a subset S
// of the unit sphere with Gaussian width w, using a_k = sqrt(k):
//   1 - 3.5 exp(-(sqrt(k) - w)^2 / 18).
// std::nullopt when the bound is vacuous (w >= sqrt(k) or value <= 0).
std::optional<double> gordon_miss_bound(int codim, double width);

struct ClosestApproachScale {
  bool intersect = false;
  // sqrt(D - n - d) / sqrt(D); zero when intersect is set.
  double scale = 0.0;
};

ClosestApproachScale expected_closest_distance(int ambient_dim, int dim_a, int dim_b);

struct ClosestDistanceConfig {
  int max_iterations = 0;  // 0 selects 4 * (d_a + d_b) + 64
  double gradient_tolerance = 1e-10;
};

struct ClosestDistance {
  double distance = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Minimizes |X_a(theta_a) - X_b(theta_b)| jointly over both coordinate
// vectors with conjugate-gradient descent on the squared distance (CGLS).
// The objective is a convex quadratic, so the Krylov iteration terminates at
// the global minimum in at most d_a + d_b steps in exact arithmetic.
ClosestDistance measure_closest_distance(const AffineCut& a, const AffineCut& b,
                                         const ClosestDistanceConfig& config = {});

}  // namespace subtomo

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace subtomo {

struct CurvePoint {
  double d = 0.0;
  double value = 0.0;
};

// Sigmoid in log-dimension:
//   p(d) = a + b / (1 + exp(-log(d / c) / s))
// a is the floor, b the range, c the midpoint dimension, s the log-slope.
// Fits report b >= 0; a falling curve has s < 0.
struct FitParams {
  double a = 0.0;
  double b = 1.0;
  double c = 1.0;
  double s = 1.0;
};

double sigmoid_curve(const FitParams& params, double d);
// -log(max(sigmoid_curve, kProbabilityFloor))
double loss_curve(const FitParams& params, double d);

enum class FitKind { probability, loss };

struct FitResult {
  FitKind kind = FitKind::probability;
  FitParams params;
  // Over (a, b, c, s), in that order: residual variance times (J^T J)^-1,
  // mapped from the internal log(c) parametrization.
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();
  double residual_rms = 0.0;
  int n_points = 0;
  // Constant data: a is the mean, b = 0, c and s are placeholders.
  bool degenerate = false;
};

// Least squares fit of sigmoid_curve (Levenberg-Marquardt, multi-start over
// 16 log-spaced midpoints and s in {+-0.1, +-0.3, +-1}). Needs >= 6 points
// with >= 4 distinct d > 0. Throws FitFailed if no start converges.
FitResult fit_prob_curve(std::span<const CurvePoint> points);

// Same for loss_curve against non-negative loss values. The fitted params
// describe the inner sigmoid, so exp(-loss) is sigmoid_curve(params, d).
FitResult fit_loss_curve(std::span<const CurvePoint> points);

struct CriticalDim {
  double threshold = 0.5;
  double d_star = 0.0;
  // Central 90% of crossings over parameter draws from the fit covariance.
  double lo = 0.0;
  double hi = 0.0;
  int ambient_dim = 0;
  double manifold_dim = 0.0;  // ambient_dim - d_star
  int band_samples = 0;       // draws that produced a crossing
};

// Closed-form inverse of sigmoid_curve:
//   q = (p - a) / b,   d = c * exp(s * log(q / (1 - q)))
// Throws NoCrossing unless q lies strictly inside (0, 1).
double invert_sigmoid_curve(const FitParams& params, double threshold);

// d* where the (inner) fitted curve crosses `threshold`, with a band from 200
// Gaussian draws of the parameters (drawn in (a, b, log c, s) space).
// Throws NoCrossing when the fitted curve never reaches the threshold.
CriticalDim extract_dstar(const FitResult& fit, double threshold, int ambient_dim,
                          std::uint64_t seed = 0x5eedULL);

// Linear-interpolated quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace subtomo

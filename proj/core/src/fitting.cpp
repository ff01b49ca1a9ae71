#include "subtomo/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include <Eigen/Dense>

#include "subtomo/error.hpp"
#include "subtomo/fields.hpp"
#include "subtomo/random.hpp"

namespace subtomo {

namespace {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Internal parametrization q = (a, b, log c, s).
FitParams to_params(const Vec4& q) { return {q[0], q[1], std::exp(q[2]), q[3]}; }

struct Evaluation {
  Eigen::VectorXd residual;
  Eigen::MatrixXd jacobian;
};

Evaluation evaluate(const Vec4& q, std::span<const CurvePoint> pts, FitKind kind) {
  const Eigen::Index n = static_cast<Eigen::Index>(pts.size());
  Evaluation e{Eigen::VectorXd(n), Eigen::MatrixXd(n, 4)};
  const double a = q[0], b = q[1], log_c = q[2], s = q[3];
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = (std::log(pts[i].d) - log_c) / s;
    const double sig = logistic(u);
    const double dsig = sig * (1.0 - sig);
    Eigen::RowVector4d grad(1.0, sig, -b * dsig / s, -b * dsig * u / s);
    const double inner = a + b * sig;
    if (kind == FitKind::probability) {
      e.residual[i] = inner - pts[i].value;
      e.jacobian.row(i) = grad;
    } else {
      if (inner > kProbabilityFloor) {
        e.residual[i] = -std::log(inner) - pts[i].value;
        e.jacobian.row(i) = -grad / inner;
      } else {
        e.residual[i] = -std::log(kProbabilityFloor) - pts[i].value;
        e.jacobian.row(i).setZero();
      }
    }
  }
  return e;
}

struct LmOutcome {
  Vec4 q;
  double cost = std::numeric_limits<double>::infinity();
  bool ok = false;
};

LmOutcome levenberg_marquardt(Vec4 q, std::span<const CurvePoint> pts, FitKind kind) {
  constexpr int kMaxIterations = 400;
  Evaluation e = evaluate(q, pts, kind);
  double cost = e.residual.squaredNorm();
  if (!std::isfinite(cost)) return {};
  double lambda = 1e-3;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Mat4 jtj = e.jacobian.transpose() * e.jacobian;
    const Vec4 jtr = e.jacobian.transpose() * e.residual;
    if (jtr.lpNorm<Eigen::Infinity>() < 1e-14 * (1.0 + cost)) break;
    bool improved = false;
    while (lambda < 1e12) {
      Mat4 damped = jtj;
      for (int k = 0; k < 4; ++k) damped(k, k) += lambda * std::max(jtj(k, k), 1e-12);
      const Vec4 step = damped.ldlt().solve(-jtr);
      const Vec4 trial = q + step;
      if (step.allFinite() && std::abs(trial[3]) > 1e-4 && std::abs(trial[2]) < 50.0) {
        Evaluation et = evaluate(trial, pts, kind);
        const double trial_cost = et.residual.squaredNorm();
        if (std::isfinite(trial_cost) && trial_cost < cost) {
          const double rel = (cost - trial_cost) / std::max(cost, 1e-300);
          q = trial;
          e = std::move(et);
          cost = trial_cost;
          lambda = std::max(lambda / 10.0, 1e-12);
          improved = true;
          if (rel < 1e-14 || step.norm() < 1e-13 * (1.0 + q.norm())) it = kMaxIterations;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  return {q, cost, std::isfinite(cost)};
}

void check_points(std::span<const CurvePoint> pts, FitKind kind) {
  if (pts.size() < 6) throw InvalidArgument("curve fit needs at least 6 points");
  std::set<double> distinct;
  for (const auto& p : pts) {
    if (!(p.d > 0.0) || !std::isfinite(p.d)) throw InvalidArgument("dimensions must be positive");
    if (!std::isfinite(p.value)) throw InvalidArgument("curve values must be finite");
    if (kind == FitKind::probability && (p.value < 0.0 || p.value > 1.0))
      throw InvalidArgument("probabilities must lie in [0, 1]");
    if (kind == FitKind::loss && p.value < 0.0) throw InvalidArgument("losses must be >= 0");
    distinct.insert(p.d);
  }
  if (distinct.size() < 4) throw InvalidArgument("curve fit needs at least 4 distinct dimensions");
}

Mat4 pseudo_inverse(const Mat4& m) {
  Eigen::SelfAdjointEigenSolver<Mat4> eig(m);
  const double cutoff = 1e-12 * std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  Vec4 inv = Vec4::Zero();
  for (int k = 0; k < 4; ++k)
    if (eig.eigenvalues()[k] > cutoff) inv[k] = 1.0 / eig.eigenvalues()[k];
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

FitResult fit_curve(std::span<const CurvePoint> pts, FitKind kind) {
  check_points(pts, kind);
  FitResult out;
  out.kind = kind;
  out.n_points = static_cast<int>(pts.size());

  // Work in probability space for the initial guesses.
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, dmin = lo, dmax = -lo, mean = 0.0;
  for (const auto& p : pts) {
    const double y = kind == FitKind::probability ? p.value : std::exp(-p.value);
    lo = std::min(lo, y);
    hi = std::max(hi, y);
    mean += p.value;
    dmin = std::min(dmin, p.d);
    dmax = std::max(dmax, p.d);
  }
  mean /= static_cast<double>(pts.size());

  bool constant = true;
  for (const auto& p : pts) constant = constant && p.value == pts[0].value;
  if (constant) {
    out.degenerate = true;
    const double level = kind == FitKind::probability ? mean : std::exp(-mean);
    out.params = {level, 0.0, std::sqrt(dmin * dmax), 1.0};
    return out;
  }

  constexpr int kMidpoints = 16;
  const double slopes[] = {0.1, -0.1, 0.3, -0.3, 1.0, -1.0};
  LmOutcome best;
  for (int i = 0; i < kMidpoints; ++i) {
    const double log_c = std::log(dmin) + (std::log(dmax) - std::log(dmin)) * (i + 0.5) / kMidpoints;
    for (double s : slopes) {
      const double b0 = std::max(hi - lo, 1e-3);
      Vec4 q0(lo, b0, log_c, s);
      LmOutcome r = levenberg_marquardt(q0, pts, kind);
      if (r.ok && r.cost < best.cost) best = r;
    }
  }
  if (!best.ok) throw FitFailed("no multi-start converged", best.cost);
  // (a, b, c, s) and (a + b, -b, c, -s) trace the same curve; keep b >= 0.
  if (best.q[1] < 0.0) best.q = Vec4(best.q[0] + best.q[1], -best.q[1], best.q[2], -best.q[3]);

  out.params = to_params(best.q);
  const Evaluation e = evaluate(best.q, pts, kind);
  const double n = static_cast<double>(pts.size());
  out.residual_rms = std::sqrt(best.cost / n);
  const double dof = std::max(n - 4.0, 1.0);
  Mat4 cov_q = pseudo_inverse(e.jacobian.transpose() * e.jacobian) * (best.cost / dof);
  const Vec4 scale(1.0, 1.0, out.params.c, 1.0);
  Mat4 cov = scale.asDiagonal() * cov_q * scale.asDiagonal();
  out.covariance = 0.5 * (cov + cov.transpose());
  return out;
}

}  // namespace

double sigmoid_curve(const FitParams& params, double d) {
  return params.a + params.b * logistic(std::log(d / params.c) / params.s);
}

double loss_curve(const FitParams& params, double d) {
  return -std::log(std::max(sigmoid_curve(params, d), kProbabilityFloor));
}

FitResult fit_prob_curve(std::span<const CurvePoint> points) {
  return fit_curve(points, FitKind::probability);
}

FitResult fit_loss_curve(std::span<const CurvePoint> points) {
  return fit_curve(points, FitKind::loss);
}

double invert_sigmoid_curve(const FitParams& params, double threshold) {
  if (params.b == 0.0 || params.s == 0.0 || !(params.c > 0.0))
    throw NoCrossing("flat curve never crosses the threshold");
  const double q = (threshold - params.a) / params.b;
  if (!(q > 0.0 && q < 1.0))
    throw NoCrossing("fitted curve never reaches p = " + std::to_string(threshold));
  return params.c * std::exp(params.s * std::log(q / (1.0 - q)));
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= values.size()) return values.back();
  const double frac = pos - static_cast<double>(i);
  return values[i] + frac * (values[i + 1] - values[i]);
}

CriticalDim extract_dstar(const FitResult& fit, double threshold, int ambient_dim,
                          std::uint64_t seed) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("threshold must lie in (0, 1)");
  if (fit.degenerate) throw NoCrossing("degenerate fit has no crossing");
  CriticalDim out;
  out.threshold = threshold;
  out.ambient_dim = ambient_dim;
  out.d_star = invert_sigmoid_curve(fit.params, threshold);
  out.manifold_dim = ambient_dim - out.d_star;

  // Draw in (a, b, log c, s) so c stays positive.
  constexpr int kDraws = 200;
  const Vec4 mean(fit.params.a, fit.params.b, std::log(fit.params.c), fit.params.s);
  const Vec4 inv_scale(1.0, 1.0, 1.0 / fit.params.c, 1.0);
  const Mat4 cov_q = inv_scale.asDiagonal() * fit.covariance * inv_scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Mat4> eig(0.5 * (cov_q + cov_q.transpose()));
  const Mat4 root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> crossings;
  for (int k = 0; k < kDraws; ++k) {
    Vec4 z;
    for (int j = 0; j < 4; ++j) z[j] = normal(rng);
    const Vec4 q = mean + root * z;
    try {
      const double d = invert_sigmoid_curve({q[0], q[1], std::exp(q[2]), q[3]}, threshold);
      if (std::isfinite(d)) crossings.push_back(d);
    } catch (const NoCrossing&) {
    }
  }
  out.band_samples = static_cast<int>(crossings.size());
  if (crossings.empty()) {
    out.lo = out.hi = out.d_star;
  } else {
    out.lo = std::min(quantile(crossings, 0.05), out.d_star);
    out.hi = std::max(quantile(crossings, 0.95), out.d_star);
  }
  return out;
}

}  // namespace subtomo

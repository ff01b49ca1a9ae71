#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>

#include <Eigen/Dense>

#include "subtomo/error.hpp"
#include "subtomo/fields.hpp"
#include "subtomo/geometry.hpp"
#include "test_support.hpp"

namespace subtomo {
namespace {

using testing::central_difference;
using testing::random_simplex;
using testing::relative_error;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

AffineCut axis_cut(int D, int n, Eigen::VectorXd offset) {
  AffineCut cut;
  cut.basis = Eigen::MatrixXd::Identity(n, D);
  cut.offset = std::move(offset);
  return cut;
}

std::vector<std::unique_ptr<ConfidenceField>> sample_fields(Rng& rng) {
  std::vector<std::unique_ptr<ConfidenceField>> out;
  AffineCut planted = sample_cut(20, 6, 20, rng);
  planted.offset = standard_normal_vector(20, rng);
  out.push_back(std::make_unique<SlabField>(planted, 2.0, 0.5, 1, 4));
  out.push_back(std::make_unique<SlabField>(planted, 3.0, 0, 2));
  out.push_back(std::make_unique<SphericalCapField>(standard_normal_vector(20, rng),
                                                    standard_normal_vector(20, rng), 1.1, 0.2, 1, 3));
  out.push_back(std::make_unique<LinearSoftmaxField>(standard_normal_matrix(5, 20, rng),
                                                     standard_normal_vector(5, rng)));
  return out;
}

TEST(FieldContract, SimplexOnRandomProbes) {
  Rng rng(1);
  for (const auto& field : sample_fields(rng)) {
    for (int t = 0; t < 100; ++t) {
      const Eigen::VectorXd x = 4.0 * standard_normal_vector(field->ambient_dim(), rng);
      const Eigen::VectorXd p = field->evaluate(x);
      ASSERT_EQ(p.size(), field->class_count());
      EXPECT_NEAR(p.sum(), 1.0, 1e-9) << field->describe();
      EXPECT_GE(p.minCoeff(), 0.0);
      EXPECT_LE((field->log_probabilities(x).array().exp().matrix() - p).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(FieldContract, GradientMatchesCentralDifferences) {
  Rng rng(2);
  for (const auto& field : sample_fields(rng)) {
    for (int t = 0; t < 100; ++t) {
      const Eigen::VectorXd x = 3.0 * standard_normal_vector(field->ambient_dim(), rng);
      const Eigen::VectorXd target = random_simplex(field->class_count(), rng);
      const auto lg = field->loss_and_input_gradient(x, target);
      const Eigen::VectorXd fd = central_difference(
          [&](const Eigen::VectorXd& y) { return field->loss_and_input_gradient(y, target).loss; }, x);
      EXPECT_LE(relative_error(lg.gradient, fd), 1e-4) << field->describe();
      EXPECT_NEAR(lg.loss, -target.dot(field->log_probabilities(x)), 1e-12);
    }
  }
}

TEST(FieldContract, RejectsBadInputsAndTargets) {
  Rng rng(3);
  for (const auto& field : sample_fields(rng)) {
    const int D = field->ambient_dim(), C = field->class_count();
    Eigen::VectorXd x = Eigen::VectorXd::Ones(D);
    x[0] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(field->evaluate(x), NonFiniteInput);
    x[0] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(field->loss_and_input_gradient(x, Eigen::VectorXd::Constant(C, 1.0 / C)), NonFiniteInput);
    EXPECT_THROW(field->evaluate(Eigen::VectorXd::Ones(D + 1)), InvalidDimension);
    EXPECT_THROW(field->loss_and_input_gradient(Eigen::VectorXd::Ones(D), Eigen::VectorXd::Ones(C)),
                 InvalidArgument);
    EXPECT_THROW(field->loss_and_input_gradient(Eigen::VectorXd::Ones(D), Eigen::VectorXd::Ones(C + 1) / (C + 1)),
                 InvalidArgument);
  }
}

TEST(CrossEntropy, MatchingTargetGivesEntropy) {
  const Eigen::VectorXd p = Eigen::Vector3d(0.2, 0.3, 0.5);
  const double entropy = -(0.2 * std::log(0.2) + 0.3 * std::log(0.3) + 0.5 * std::log(0.5));
  EXPECT_NEAR(cross_entropy(p, p), entropy, 1e-15);
  EXPECT_EQ(cross_entropy(Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(1.0, 0.0)), 0.0);
  EXPECT_NEAR(cross_entropy(Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(1.0, 0.0)),
              -std::log(kProbabilityFloor), 1e-9);
}

TEST(CrossEntropy, LogSoftmaxIsStableAndShiftInvariant) {
  const Eigen::VectorXd z = Eigen::Vector3d(1000.0, 999.0, -1000.0);
  const Eigen::VectorXd ls = log_softmax(z);
  EXPECT_TRUE(ls.allFinite());
  EXPECT_NEAR(softmax(z).sum(), 1.0, 1e-12);
  EXPECT_LE((log_softmax(z.array() + 17.0) - ls).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SlabField, PointOnSubspaceHasSigmoidOfRatio) {
  Rng rng(4);
  AffineCut planted = sample_cut(10, 3, 10, rng);
  planted.offset = standard_normal_vector(10, rng);
  const SlabField field(planted, 0.8, 0.1, 0, 3);
  const Eigen::VectorXd x = embed(planted, Eigen::Vector3d(0.5, -2.0, 1.0));
  const Eigen::VectorXd p = field.evaluate(x);
  EXPECT_NEAR(p[0], sigmoid(8.0), 1e-9);
  EXPECT_GT(p[0], 0.5);
  EXPECT_NEAR(p[1], p[2], 1e-15);
}

TEST(SlabField, HalfAtExactlyHalfWidth) {
  const SlabField field(axis_cut(4, 2, Eigen::VectorXd::Zero(4)), 0.5, 0, 2);
  EXPECT_DOUBLE_EQ(field.temperature(), 0.5 / 8.0);
  const Eigen::VectorXd p = field.evaluate(Eigen::Vector4d(3.0, -1.0, 0.5, 0.0));
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], 0.5);
}

TEST(SlabField, SuperlevelSetIsTheNeighborhood) {
  Rng rng(5);
  AffineCut planted = sample_cut(16, 5, 16, rng);
  planted.offset = standard_normal_vector(16, rng);
  const double eps = 1.5;
  const SlabField field(planted, eps, 1, 3);
  for (int t = 0; t < 500; ++t) {
    const Eigen::VectorXd x = planted.offset + standard_normal_vector(16, rng) * 0.6;
    const double dist = distance_to_cut(planted, x);
    if (std::abs(dist - eps) < 1e-9) continue;
    EXPECT_EQ(field.evaluate(x)[1] > 0.5, dist < eps);
  }
}

TEST(SlabField, ConfidenceDecreasesWithDistanceAndSplitsRest) {
  const SlabField field(axis_cut(6, 2, Eigen::VectorXd::Zero(6)), 1.0, 0.3, 2, 5);
  double prev = 1.0;
  for (double r = 0.0; r < 5.0; r += 0.1) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(6);
    x[3] = r;
    const Eigen::VectorXd p = field.evaluate(x);
    EXPECT_LT(p[2], prev);
    prev = p[2];
    for (int c : {0, 1, 3, 4}) EXPECT_NEAR(p[c], (1.0 - p[2]) / 4.0, 1e-12);
  }
}

TEST(SlabField, RejectsBadParameters) {
  const AffineCut cut = axis_cut(4, 2, Eigen::VectorXd::Zero(4));
  EXPECT_THROW(SlabField(cut, 0.0, 0, 2), InvalidArgument);
  EXPECT_THROW(SlabField(cut, 1.0, -1.0, 0, 2), InvalidArgument);
  EXPECT_THROW(SlabField(cut, 1.0, 2, 2), InvalidArgument);
  EXPECT_THROW(SlabField(cut, 1.0, 0, 1), InvalidArgument);
}

TEST(SphericalCapField, HalfLevelSetIsTheCap) {
  Rng rng(6);
  const Eigen::VectorXd center = standard_normal_vector(12, rng);
  const Eigen::VectorXd axis = standard_normal_vector(12, rng).normalized();
  const double alpha = 0.9;
  const SphericalCapField field(center, axis, alpha, 0.05);
  for (int t = 0; t < 500; ++t) {
    const Eigen::VectorXd u = standard_normal_vector(12, rng).normalized();
    const double phi = std::acos(std::clamp(u.dot(axis), -1.0, 1.0));
    if (std::abs(phi - alpha) < 1e-9) continue;
    const double r = 0.1 + 3.0 * (t % 7);
    EXPECT_EQ(field.evaluate(center + r * u)[0] > 0.5, phi < alpha);
  }
  EXPECT_DOUBLE_EQ(field.superlevel_angle(0.5), alpha);
  EXPECT_LT(field.superlevel_angle(0.9), alpha);
  EXPECT_GT(field.superlevel_angle(0.1), alpha);
  EXPECT_THROW(field.superlevel_angle(1.0), InvalidArgument);
  EXPECT_THROW(field.superlevel_angle(1.0 - 1e-30), InvalidArgument);
}

TEST(LinearSoftmaxField, ZeroWeightsAreUniform) {
  const LinearSoftmaxField field(Eigen::MatrixXd::Zero(4, 7), Eigen::VectorXd::Zero(4));
  const Eigen::VectorXd p = field.evaluate(Eigen::VectorXd::LinSpaced(7, -3.0, 3.0));
  for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(p[c], 0.25);
}

TEST(LinearSoftmaxField, ClosedFormGradientAndSoftmax) {
  Rng rng(7);
  const Eigen::MatrixXd W = standard_normal_matrix(3, 9, rng);
  const Eigen::VectorXd b = standard_normal_vector(3, rng);
  const LinearSoftmaxField field(W, b);
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXd x = standard_normal_vector(9, rng);
    const Eigen::VectorXd target = random_simplex(3, rng);
    const Eigen::VectorXd z = W * x + b;
    const Eigen::VectorXd p = z.array().exp() / z.array().exp().sum();
    EXPECT_LE((field.evaluate(x) - p).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::VectorXd g = W.transpose() * (p - target);
    const auto lg = field.loss_and_input_gradient(x, target);
    EXPECT_LE(relative_error(lg.gradient, g), 1e-10);
    const Eigen::VectorXd fd = central_difference(
        [&](const Eigen::VectorXd& y) { return field.loss_and_input_gradient(y, target).loss; }, x, 1e-5);
    EXPECT_LE(relative_error(lg.gradient, fd), 1e-6);
  }
  EXPECT_THROW(LinearSoftmaxField(W, Eigen::VectorXd::Zero(4)), InvalidDimension);
}

TEST(CapSupportOracle, LimitingAngles) {
  Rng rng(8);
  const Eigen::VectorXd u = standard_normal_vector(30, rng).normalized();
  const auto whole = cap_support_oracle(u, std::numbers::pi);
  const auto point = cap_support_oracle(u, 0.0);
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd g = standard_normal_vector(30, rng);
    EXPECT_NEAR(whole(g), g.norm(), 1e-12);
    EXPECT_NEAR(point(g), g.dot(u), 1e-10);
  }
}

// Rejection-sampled cap points give a sample-maximum support that stays
// below the analytic one and closes the gap as the sample grows.
TEST(CapSupportOracle, AnalyticOracleBoundsSampledCap) {
  constexpr int D = 6;
  constexpr double alpha = 1.0;
  Rng rng(9);
  const Eigen::VectorXd u = Eigen::VectorXd::Unit(D, 0);
  auto sample_cap = [&](int n) {
    Eigen::MatrixXd cloud(n, D);
    for (int i = 0; i < n;) {
      const Eigen::VectorXd v = standard_normal_vector(D, rng).normalized();
      if (v[0] > std::cos(alpha)) cloud.row(i++) = v.transpose();
    }
    return point_cloud_oracle(cloud);
  };
  const auto coarse = sample_cap(200);
  const auto fine = sample_cap(20000);
  const auto analytic = cap_support_oracle(u, alpha);
  double gap_coarse = 0.0, gap_fine = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Eigen::VectorXd g = standard_normal_vector(D, rng);
    const double a = analytic(g);
    EXPECT_LE(coarse(g), a + 1e-12);
    EXPECT_LE(fine(g), a + 1e-12);
    gap_coarse += (a - coarse(g)) / a;
    gap_fine += (a - fine(g)) / a;
  }
  EXPECT_LT(gap_fine, gap_coarse);
  EXPECT_LT(gap_fine / 200.0, 0.05);
}

TEST(CapGaussianWidth, HemisphereMatchesMonteCarlo) {
  constexpr int D = 256;
  Rng rng(10);
  const Eigen::VectorXd u = standard_normal_vector(D, rng).normalized();
  const auto est = gaussian_width(cap_support_oracle(u, std::numbers::pi / 2.0), D, 4000, rng);
  const double w = cap_gaussian_width(D, std::numbers::pi / 2.0);
  EXPECT_NEAR(est.width, w, 3.0 * est.std_error);
  EXPECT_NEAR(w * w, std::pow(est.width, 2), 6.0 * est.width * est.std_error);
  EXPECT_NEAR(cap_gaussian_width(D, std::numbers::pi), expected_gaussian_norm(D), 1e-6);
  EXPECT_NEAR(cap_gaussian_width(D, 0.0), 0.0, 1e-9);
  EXPECT_NEAR(expected_gaussian_norm(D), testing::chi_mean(D), 1e-9);
}

TEST(CapGaussianWidth, IncreasesWithAngle) {
  double prev = -1.0;
  for (double a = 0.0; a <= std::numbers::pi; a += 0.1) {
    const double w = cap_gaussian_width(64, a);
    if (a < std::numbers::pi / 2.0) EXPECT_GT(w, prev);
    EXPECT_GE(w, prev - 1e-9);
    prev = w;
  }
}

TEST(CapSupportOracle, FieldThresholdSelectsSuperlevelCap) {
  const SphericalCapField field(Eigen::VectorXd::Zero(5), Eigen::VectorXd::Unit(5, 2), 0.7, 0.1);
  const auto oracle = make_cap_support_oracle(field, 0.5);
  const Eigen::VectorXd g = Eigen::VectorXd::Unit(5, 2);
  EXPECT_NEAR(oracle(g), 1.0, 1e-12);
  const Eigen::VectorXd perp = Eigen::VectorXd::Unit(5, 0);
  EXPECT_NEAR(oracle(perp), std::cos(std::numbers::pi / 2.0 - 0.7), 1e-12);
}

}  // namespace
}  // namespace subtomo

#pragma once

#include <string>

#include <Eigen/Core>

#include "subtomo/geometry.hpp"

namespace subtomo {

// Floor applied to probabilities before taking logs in cross_entropy().
// Fields compute log-probabilities in log space and do not need it.
inline constexpr double kProbabilityFloor = 1e-12;

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits);
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// -sum_i t_i log max(p_i, floor). Terms with t_i == 0 are skipped.
double cross_entropy(const Eigen::VectorXd& probabilities, const Eigen::VectorXd& target);
double cross_entropy_from_logs(const Eigen::VectorXd& log_probabilities,
                               const Eigen::VectorXd& target);

// Throws InvalidArgument unless target is a probability vector of size n.
void validate_target(const Eigen::VectorXd& target, int class_count);

// Maps inputs X in R^D to a point on the probability simplex and provides the
// input gradient of the cross-entropy against a target distribution.
// Implementations are immutable after construction; all calls are
// thread-safe.
class ConfidenceField {
 public:
  virtual ~ConfidenceField() = default;

  virtual int class_count() const = 0;
  virtual int ambient_dim() const = 0;
  virtual std::string describe() const = 0;

  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const;
  Eigen::VectorXd log_probabilities(const Eigen::VectorXd& x) const;
  // L = -target . log p(X) and dL/dX.
  LossAndGradient loss_and_input_gradient(const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& target) const;

 protected:
  virtual Eigen::VectorXd do_log_probabilities(const Eigen::VectorXd& x) const = 0;
  virtual LossAndGradient do_loss_and_input_gradient(const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& target) const = 0;

 private:
  void check_input(const Eigen::VectorXd& x) const;
};

// High confidence in `positive_class` within distance `half_width` of a
// planted affine subspace:
//   p_pos = sigmoid((half_width - dist(X, planted)) / temperature)
// Remaining mass is split evenly across the other classes.
class SlabField final : public ConfidenceField {
 public:
  SlabField(AffineCut planted, double half_width, double temperature, int positive_class,
            int class_count);
  // temperature = half_width / 8
  SlabField(AffineCut planted, double half_width, int positive_class, int class_count);

  int class_count() const override { return class_count_; }
  int ambient_dim() const override { return planted_.ambient_dim(); }
  std::string describe() const override;

  const AffineCut& planted() const { return planted_; }
  double half_width() const { return half_width_; }
  double temperature() const { return temperature_; }
  int positive_class() const { return positive_class_; }

 protected:
  Eigen::VectorXd do_log_probabilities(const Eigen::VectorXd& x) const override;
  LossAndGradient do_loss_and_input_gradient(const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& target) const override;

 private:
  AffineCut planted_;
  double half_width_;
  double temperature_;
  int positive_class_;
  int class_count_;
};

// Confidence depends only on the angle between X - center and `axis`:
//   p_pos = sigmoid((cos(angle) - cos(cap_angle)) / sharpness)
// so the > 50% region is the cone over the spherical cap of angle cap_angle.
// At X == center the angle is taken as pi/2.
class SphericalCapField final : public ConfidenceField {
 public:
  SphericalCapField(Eigen::VectorXd center, Eigen::VectorXd axis, double cap_angle,
                    double sharpness, int positive_class = 0, int class_count = 2);

  int class_count() const override { return class_count_; }
  int ambient_dim() const override { return static_cast<int>(center_.size()); }
  std::string describe() const override;

  const Eigen::VectorXd& center() const { return center_; }
  const Eigen::VectorXd& axis() const { return axis_; }
  double cap_angle() const { return cap_angle_; }
  double sharpness() const { return sharpness_; }
  // Angle of the cap where p_pos > p_star. Throws InvalidArgument if that
  // region is empty.
  double superlevel_angle(double p_star) const;

 protected:
  Eigen::VectorXd do_log_probabilities(const Eigen::VectorXd& x) const override;
  LossAndGradient do_loss_and_input_gradient(const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& target) const override;

 private:
  Eigen::VectorXd center_;
  Eigen::VectorXd axis_;
  double cap_angle_;
  double sharpness_;
  int positive_class_;
  int class_count_;
};

// softmax(W X + b).
class LinearSoftmaxField final : public ConfidenceField {
 public:
  LinearSoftmaxField(Eigen::MatrixXd weights, Eigen::VectorXd biases);

  int class_count() const override { return static_cast<int>(weights_.rows()); }
  int ambient_dim() const override { return static_cast<int>(weights_.cols()); }
  std::string describe() const override;

  const Eigen::MatrixXd& weights() const { return weights_; }
  const Eigen::VectorXd& biases() const { return biases_; }

 protected:
  Eigen::VectorXd do_log_probabilities(const Eigen::VectorXd& x) const override;
  LossAndGradient do_loss_and_input_gradient(const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& target) const override;

 private:
  Eigen::MatrixXd weights_;
  Eigen::VectorXd biases_;
};

// Support function of the spherical cap {v in S^{D-1} : angle(v, axis) <= angle}
// (centered at the origin):
//   h(g) = |g| cos(max(0, angle(g, axis) - angle))
// which reduces to |g| for angle = pi and to g . axis for angle = 0.
SupportOracle cap_support_oracle(Eigen::VectorXd axis, double angle);

// Oracle for the projection onto the unit sphere (around the field's
// center) of the region where p_pos > p_star.
SupportOracle make_cap_support_oracle(const SphericalCapField& field, double p_star);

// Exact Gaussian width of a spherical cap in R^D. Uses independence of |g|
// and its direction: w = E|g| * E[cos(max(0, phi - angle))] where phi has
// density proportional to sin^{D-2}(phi); the angular factor is integrated
// with composite Simpson quadrature.
double cap_gaussian_width(int ambient_dim, double angle);

// E|g| for g ~ N(0, I_D), via lgamma.
double expected_gaussian_norm(int ambient_dim);

}  // namespace subtomo

#include "subtomo/fields.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "subtomo/error.hpp"

namespace subtomo {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Two-level field: log p_pos = log sigmoid(z), others share log sigmoid(-z).
Eigen::VectorXd binary_log_probs(double z, int positive, int classes) {
  Eigen::VectorXd out(classes);
  const double log_rest = -softplus(z) - std::log(static_cast<double>(classes - 1));
  out.setConstant(log_rest);
  out[positive] = -softplus(-z);
  return out;
}

// dL/dz for the two-level field.
double binary_loss_slope(double z, const Eigen::VectorXd& target, int positive) {
  const double t_pos = target[positive];
  const double t_rest = target.sum() - t_pos;
  return t_rest * sigmoid(z) - t_pos * sigmoid(-z);
}

void check_classes(int positive, int classes) {
  if (classes < 2) throw InvalidArgument("a field needs at least 2 classes");
  if (positive < 0 || positive >= classes)
    throw InvalidArgument("positive class " + std::to_string(positive) + " out of range");
}

}  // namespace

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) { return log_softmax(logits).array().exp(); }

double cross_entropy(const Eigen::VectorXd& probabilities, const Eigen::VectorXd& target) {
  if (probabilities.size() != target.size())
    throw InvalidDimension("cross_entropy: size mismatch");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < target.size(); ++i)
    if (target[i] != 0.0) loss -= target[i] * std::log(std::max(probabilities[i], kProbabilityFloor));
  return loss;
}

double cross_entropy_from_logs(const Eigen::VectorXd& log_probabilities,
                               const Eigen::VectorXd& target) {
  if (log_probabilities.size() != target.size())
    throw InvalidDimension("cross_entropy: size mismatch");
  double loss = 0.0;
  for (Eigen::Index i = 0; i < target.size(); ++i)
    if (target[i] != 0.0) loss -= target[i] * log_probabilities[i];
  return loss;
}

void validate_target(const Eigen::VectorXd& target, int class_count) {
  if (target.size() != class_count)
    throw InvalidArgument("target has " + std::to_string(target.size()) + " entries, field has " +
                          std::to_string(class_count) + " classes");
  if (!target.allFinite() || (target.array() < 0.0).any() || std::abs(target.sum() - 1.0) > 1e-9)
    throw InvalidArgument("target is not a probability vector");
}

// ---------------------------------------------------------------------------

void ConfidenceField::check_input(const Eigen::VectorXd& x) const {
  if (x.size() != ambient_dim())
    throw InvalidDimension("input has dimension " + std::to_string(x.size()) + ", field expects " +
                           std::to_string(ambient_dim()));
  if (!x.allFinite()) throw NonFiniteInput("input contains NaN or Inf");
}

Eigen::VectorXd ConfidenceField::evaluate(const Eigen::VectorXd& x) const {
  return log_probabilities(x).array().exp();
}

Eigen::VectorXd ConfidenceField::log_probabilities(const Eigen::VectorXd& x) const {
  check_input(x);
  return do_log_probabilities(x);
}

LossAndGradient ConfidenceField::loss_and_input_gradient(const Eigen::VectorXd& x,
                                                         const Eigen::VectorXd& target) const {
  check_input(x);
  validate_target(target, class_count());
  return do_loss_and_input_gradient(x, target);
}

// ---------------------------------------------------------------------------

SlabField::SlabField(AffineCut planted, double half_width, double temperature, int positive_class,
                     int class_count)
    : planted_(std::move(planted)),
      half_width_(half_width),
      temperature_(temperature),
      positive_class_(positive_class),
      class_count_(class_count) {
  check_classes(positive_class, class_count);
  if (!(half_width > 0.0) || !(temperature > 0.0))
    throw InvalidArgument("slab half width and temperature must be positive");
  if (!planted_.offset.allFinite()) throw NonFiniteInput("planted offset is not finite");
}

SlabField::SlabField(AffineCut planted, double half_width, int positive_class, int class_count)
    : SlabField(std::move(planted), half_width, half_width / 8.0, positive_class, class_count) {}

std::string SlabField::describe() const {
  std::ostringstream os;
  os << "slab(D=" << ambient_dim() << ",n=" << planted_.cut_dim() << ",eps=" << half_width_
     << ",tau=" << temperature_ << ",class=" << positive_class_ << ",C=" << class_count_ << ")";
  return os.str();
}

Eigen::VectorXd SlabField::do_log_probabilities(const Eigen::VectorXd& x) const {
  const double dist = distance_to_cut(planted_, x);
  return binary_log_probs((half_width_ - dist) / temperature_, positive_class_, class_count_);
}

LossAndGradient SlabField::do_loss_and_input_gradient(const Eigen::VectorXd& x,
                                                      const Eigen::VectorXd& target) const {
  const Eigen::VectorXd rel = x - planted_.offset;
  const Eigen::VectorXd residual = rel - planted_.basis.transpose() * (planted_.basis * rel);
  const double dist = residual.norm();
  const double z = (half_width_ - dist) / temperature_;

  LossAndGradient out;
  out.loss = cross_entropy_from_logs(binary_log_probs(z, positive_class_, class_count_), target);
  const double slope = binary_loss_slope(z, target, positive_class_);
  if (dist > 0.0)
    out.gradient = (-slope / (temperature_ * dist)) * residual;
  else
    out.gradient = Eigen::VectorXd::Zero(x.size());
  return out;
}

// ---------------------------------------------------------------------------

SphericalCapField::SphericalCapField(Eigen::VectorXd center, Eigen::VectorXd axis,
                                     double cap_angle, double sharpness, int positive_class,
                                     int class_count)
    : center_(std::move(center)),
      axis_(std::move(axis)),
      cap_angle_(cap_angle),
      sharpness_(sharpness),
      positive_class_(positive_class),
      class_count_(class_count) {
  check_classes(positive_class, class_count);
  if (center_.size() != axis_.size()) throw InvalidDimension("cap axis and center differ in size");
  const double n = axis_.norm();
  if (n == 0.0) throw ZeroNorm("cap axis is zero");
  axis_ /= n;
  if (!(cap_angle >= 0.0 && cap_angle <= std::numbers::pi))
    throw InvalidArgument("cap angle must lie in [0, pi]");
  if (!(sharpness > 0.0)) throw InvalidArgument("cap sharpness must be positive");
}

std::string SphericalCapField::describe() const {
  std::ostringstream os;
  os << "cap(D=" << ambient_dim() << ",angle=" << cap_angle_ << ",tau=" << sharpness_ << ")";
  return os.str();
}

double SphericalCapField::superlevel_angle(double p_star) const {
  if (!(p_star > 0.0 && p_star < 1.0)) throw InvalidArgument("threshold must lie in (0, 1)");
  const double c = std::cos(cap_angle_) + sharpness_ * std::log(p_star / (1.0 - p_star));
  if (c >= 1.0) throw InvalidArgument("superlevel set is empty at this threshold");
  if (c <= -1.0) return std::numbers::pi;
  return std::acos(c);
}

Eigen::VectorXd SphericalCapField::do_log_probabilities(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd v = x - center_;
  const double rho = v.norm();
  const double cos_phi = rho > 0.0 ? axis_.dot(v) / rho : 0.0;
  return binary_log_probs((cos_phi - std::cos(cap_angle_)) / sharpness_, positive_class_,
                          class_count_);
}

LossAndGradient SphericalCapField::do_loss_and_input_gradient(const Eigen::VectorXd& x,
                                                              const Eigen::VectorXd& target) const {
  const Eigen::VectorXd v = x - center_;
  const double rho = v.norm();
  const double cos_phi = rho > 0.0 ? axis_.dot(v) / rho : 0.0;
  const double z = (cos_phi - std::cos(cap_angle_)) / sharpness_;

  LossAndGradient out;
  out.loss = cross_entropy_from_logs(binary_log_probs(z, positive_class_, class_count_), target);
  if (rho > 0.0) {
    const double slope = binary_loss_slope(z, target, positive_class_);
    // d cos(phi) / dX = (axis - cos(phi) * v / rho) / rho
    out.gradient = (slope / (sharpness_ * rho)) * (axis_ - (cos_phi / rho) * v);
  } else {
    out.gradient = Eigen::VectorXd::Zero(x.size());
  }
  return out;
}

// ---------------------------------------------------------------------------

LinearSoftmaxField::LinearSoftmaxField(Eigen::MatrixXd weights, Eigen::VectorXd biases)
    : weights_(std::move(weights)), biases_(std::move(biases)) {
  if (weights_.rows() < 2) throw InvalidArgument("a field needs at least 2 classes");
  if (biases_.size() != weights_.rows()) throw InvalidDimension("bias/weight row mismatch");
  if (!weights_.allFinite() || !biases_.allFinite())
    throw NonFiniteInput("linear field parameters are not finite");
}

std::string LinearSoftmaxField::describe() const {
  std::ostringstream os;
  os << "linear_softmax(D=" << ambient_dim() << ",C=" << class_count() << ")";
  return os.str();
}

Eigen::VectorXd LinearSoftmaxField::do_log_probabilities(const Eigen::VectorXd& x) const {
  return log_softmax(weights_ * x + biases_);
}

LossAndGradient LinearSoftmaxField::do_loss_and_input_gradient(
    const Eigen::VectorXd& x, const Eigen::VectorXd& target) const {
  const Eigen::VectorXd logp = log_softmax(weights_ * x + biases_);
  LossAndGradient out;
  out.loss = cross_entropy_from_logs(logp, target);
  const Eigen::VectorXd delta = logp.array().exp() * target.sum() - target.array();
  out.gradient = weights_.transpose() * delta;
  return out;
}

// ---------------------------------------------------------------------------

SupportOracle cap_support_oracle(Eigen::VectorXd axis, double angle) {
  const double n = axis.norm();
  if (n == 0.0) throw ZeroNorm("cap axis is zero");
  axis /= n;
  return [axis = std::move(axis), angle](const Eigen::VectorXd& g) {
    const double gn = g.norm();
    if (gn == 0.0) return 0.0;
    const double phi = std::acos(std::clamp(axis.dot(g) / gn, -1.0, 1.0));
    return gn * std::cos(std::max(0.0, phi - angle));
  };
}

SupportOracle make_cap_support_oracle(const SphericalCapField& field, double p_star) {
  return cap_support_oracle(field.axis(), field.superlevel_angle(p_star));
}

double expected_gaussian_norm(int ambient_dim) {
  if (ambient_dim < 1) throw InvalidDimension("ambient dimension must be positive");
  const double d = ambient_dim;
  return std::sqrt(2.0) * std::exp(std::lgamma((d + 1.0) / 2.0) - std::lgamma(d / 2.0));
}

double cap_gaussian_width(int ambient_dim, double angle) {
  if (ambient_dim < 2) throw InvalidDimension("cap width needs D >= 2");
  constexpr int kIntervals = 20000;  // even
  const double h = std::numbers::pi / kIntervals;
  const double power = ambient_dim - 2.0;
  double mass = 0.0;
  double weighted = 0.0;
  for (int i = 0; i <= kIntervals; ++i) {
    const double phi = i * h;
    const double s = std::sin(phi);
    double density = 0.0;
    if (power == 0.0)
      density = 1.0;
    else if (s > 0.0)
      density = std::exp(power * std::log(s));
    const double simpson = (i == 0 || i == kIntervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    mass += simpson * density;
    weighted += simpson * density * std::cos(std::max(0.0, phi - angle));
  }
  return expected_gaussian_norm(ambient_dim) * weighted / mass;
}

}  // namespace subtomo

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "subtomo/datasets.hpp"
#include "subtomo/fields.hpp"
#include "subtomo/fitting.hpp"
#include "subtomo/geometry.hpp"
#include "subtomo/parallel.hpp"

namespace subtomo {

enum class TargetKind { one_hot, boundary, uniform_all };

// Target probability vector for a probe. `classes` is the support: {k} for
// one_hot, K for boundary, all classes for uniform_all.
struct TargetVector {
  Eigen::VectorXd p;
  TargetKind kind = TargetKind::one_hot;
  std::vector<int> classes;

  std::string describe() const;
};

// one_hot uses classes[0]; boundary spreads 1/|K| over classes (|K| >= 2,
// distinct); uniform_all ignores `classes`.
TargetVector make_target(TargetKind kind, const std::vector<int>& classes, int class_count);
TargetVector one_hot_target(int cls, int class_count);
TargetVector boundary_target(const std::vector<int>& classes, int class_count);
TargetVector uniform_target(int class_count);

// Where the cut offset X0 comes from.
struct OffsetPolicy {
  enum class Kind { dataset, gaussian };
  Kind kind = Kind::gaussian;
  // dataset: X0 is a uniformly drawn row whose label is outside the target's
  // support. Falls back to the gaussian rule when no such row exists.
  const Dataset* data = nullptr;
  // gaussian: X0 = center + scale * N(0, I). Empty center means the origin.
  Eigen::VectorXd center;
  double scale = 1.0;

  static OffsetPolicy from_dataset(const Dataset& data);
  static OffsetPolicy gaussian(double scale, Eigen::VectorXd center = {});
};

enum class SpanMode {
  gaussian,         // sample_cut with the configured sparsity
  data_difference,  // rows from orthonormalized differences of random dataset pairs
};

struct ProbeConfig {
  double learning_rate = 0.05;
  int max_steps = 1000;
  double gradient_tolerance = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int sparsity = 0;  // non-zeros per basis row; 0 means dense
  SpanMode span = SpanMode::gaussian;
};

void validate(const ProbeConfig& config);

struct ProbeResult {
  int cut_dim = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd p_max;
  // p_max[k] for one_hot(k) targets.
  std::optional<double> target_component;
  double loss_min = 0.0;      // cross_entropy(p_max, target)
  double initial_loss = 0.0;  // loss at theta = 0, i.e. at X0
  int steps_used = 0;
  bool converged = false;
  int offset_index = -1;  // dataset row used for X0; -1 for a gaussian draw
  bool offset_fallback = false;
  double theta_norm = 0.0;
  Eigen::VectorXd theta_min;  // best iterate in cut coordinates
  bool failed = false;
  std::string failure;
};

// Adam on theta from theta = 0 over a given cut; seed and offset fields of
// the result are left at their defaults.
ProbeResult optimize_on_cut(const ConfidenceField& field, const AffineCut& cut,
                            const TargetVector& target, const ProbeConfig& config);

// One constrained optimization: draw a cut of dimension d through X0, run
// Adam on theta from theta = 0 and report the best iterate seen. All
// randomness comes from Rng(seed). Throws Divergence on a non-finite loss.
ProbeResult probe(const ConfidenceField& field, int cut_dim, const TargetVector& target,
                  const OffsetPolicy& offsets, const ProbeConfig& config, std::uint64_t seed);

struct SweepConfig {
  std::vector<int> dims;
  int repeats = 10;
  std::uint64_t master_seed = 0;
  int threads = 1;
  ProbeConfig probe;
};

// Probe seed for dimension d, repeat r: derive_seed(master_seed, d, r).
std::uint64_t probe_seed(std::uint64_t master_seed, int cut_dim, int repeat);

struct SweepResult {
  std::string field_descriptor;
  TargetVector target;
  std::vector<int> dims;
  int repeats = 0;
  std::uint64_t master_seed = 0;
  // results[i][r] for dims[i], repeat r.
  std::vector<std::vector<ProbeResult>> results;
};

// repeats independent probes for every d in dims (strictly increasing).
// Probes that diverge are kept, flagged `failed`, with target_component 0.
// Output is independent of `threads`.
SweepResult sweep(const ConfidenceField& field, const TargetVector& target,
                  const OffsetPolicy& offsets, const SweepConfig& config);

// Header: d,seed,target_component,L_min,steps,converged,offset_index,theta_norm
// target_component is empty for targets without one.
std::string sweep_csv(const SweepResult& result);

// Raw (d, target_component) points for curve fitting; failed probes
// contribute 0. Throws InvalidArgument for non one_hot targets.
std::vector<CurvePoint> probability_points(const SweepResult& result);
// Raw (d, L_min) points.
std::vector<CurvePoint> loss_points(const SweepResult& result);
// Median target_component per dimension, in dims order.
std::vector<double> median_target_component(const SweepResult& result);

}  // namespace subtomo

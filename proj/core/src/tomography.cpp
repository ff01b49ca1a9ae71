#include "subtomo/tomography.hpp"
#include "subtomo/format.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "subtomo/error.hpp"
#include "subtomo/random.hpp"

namespace subtomo {

std::string TargetVector::describe() const {
  std::ostringstream os;
  switch (kind) {
    case TargetKind::one_hot: os << "one_hot(" << classes.at(0) << ")"; break;
    case TargetKind::boundary:
      os << "boundary(";
      for (std::size_t i = 0; i < classes.size(); ++i) os << (i ? " " : "") << classes[i];
      os << ")";
      break;
    case TargetKind::uniform_all: os << "uniform_all"; break;
  }
  return os.str();
}

TargetVector make_target(TargetKind kind, const std::vector<int>& classes, int class_count) {
  if (class_count < 2) throw InvalidArgument("targets need at least 2 classes");
  auto check = [&](int c) {
    if (c < 0 || c >= class_count)
      throw InvalidArgument("class " + std::to_string(c) + " out of range [0, " +
                            std::to_string(class_count) + ")");
  };
  TargetVector t;
  t.kind = kind;
  t.p = Eigen::VectorXd::Zero(class_count);
  switch (kind) {
    case TargetKind::one_hot:
      if (classes.size() != 1) throw InvalidArgument("one_hot target takes exactly one class");
      check(classes[0]);
      t.classes = classes;
      t.p[classes[0]] = 1.0;
      break;
    case TargetKind::boundary: {
      std::vector<int> k = classes;
      std::sort(k.begin(), k.end());
      k.erase(std::unique(k.begin(), k.end()), k.end());
      if (k.size() < 2 || k.size() != classes.size())
        throw InvalidArgument("boundary target needs at least 2 distinct classes");
      for (int c : k) check(c);
      t.classes = k;
      for (int c : k) t.p[c] = 1.0 / static_cast<double>(k.size());
      break;
    }
    case TargetKind::uniform_all:
      t.classes.resize(class_count);
      for (int c = 0; c < class_count; ++c) t.classes[c] = c;
      t.p.setConstant(1.0 / class_count);
      break;
  }
  return t;
}

TargetVector one_hot_target(int cls, int class_count) {
  return make_target(TargetKind::one_hot, {cls}, class_count);
}
TargetVector boundary_target(const std::vector<int>& classes, int class_count) {
  return make_target(TargetKind::boundary, classes, class_count);
}
TargetVector uniform_target(int class_count) {
  return make_target(TargetKind::uniform_all, {}, class_count);
}

OffsetPolicy OffsetPolicy::from_dataset(const Dataset& data) {
  OffsetPolicy p;
  p.kind = Kind::dataset;
  p.data = &data;
  return p;
}

OffsetPolicy OffsetPolicy::gaussian(double scale, Eigen::VectorXd center) {
  OffsetPolicy p;
  p.kind = Kind::gaussian;
  p.scale = scale;
  p.center = std::move(center);
  return p;
}

void validate(const ProbeConfig& config) {
  if (!(config.learning_rate > 0.0)) throw InvalidArgument("probe learning_rate must be positive");
  if (config.max_steps < 0) throw InvalidArgument("probe max_steps must be >= 0");
  if (!(config.gradient_tolerance >= 0.0)) throw InvalidArgument("gradient_tolerance must be >= 0");
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) || !(config.beta2 >= 0.0 && config.beta2 < 1.0))
    throw InvalidArgument("Adam betas must lie in [0, 1)");
  if (!(config.epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  if (config.sparsity < 0) throw InvalidArgument("sparsity must be >= 0");
}

namespace {

AffineCut draw_cut(int dim, int cut_dim, const OffsetPolicy& offsets, const ProbeConfig& config,
                   Rng& rng) {
  if (config.span == SpanMode::gaussian)
    return sample_cut(dim, cut_dim, config.sparsity > 0 ? config.sparsity : dim, rng);

  if (offsets.data == nullptr || offsets.data->size() < 2)
    throw InvalidArgument("data_difference spans need a dataset offset policy");
  const Dataset& data = *offsets.data;
  std::uniform_int_distribution<int> pick(0, data.size() - 1);
  for (int attempt = 0; attempt < 16; ++attempt) {
    Eigen::MatrixXd rows(cut_dim, dim);
    for (int r = 0; r < cut_dim; ++r) {
      const int i = pick(rng);
      int j = pick(rng);
      while (j == i) j = pick(rng);
      rows.row(r) = data.inputs.row(i) - data.inputs.row(j);
    }
    try {
      AffineCut cut;
      cut.basis = orthonormalize_rows(std::move(rows));
      cut.offset = Eigen::VectorXd::Zero(dim);
      cut.sparsity = dim;
      return cut;
    } catch (const DegenerateBasis&) {
    }
  }
  throw DegenerateBasis("data differences do not span " + std::to_string(cut_dim) + " dimensions");
}

}  // namespace

ProbeResult optimize_on_cut(const ConfidenceField& field, const AffineCut& cut,
                            const TargetVector& target, const ProbeConfig& config) {
  validate(config);
  validate_target(target.p, field.class_count());
  if (cut.ambient_dim() != field.ambient_dim())
    throw InvalidDimension("cut and field live in different dimensions");
  const int cut_dim = cut.cut_dim();
  ProbeResult result;
  result.cut_dim = cut_dim;

  // Adam on theta starting at 0, i.e. at X0.
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(cut_dim);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(cut_dim);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(cut_dim);
  Eigen::VectorXd best_theta = theta;
  double best_loss = std::numeric_limits<double>::infinity();

  for (int step = 0;; ++step) {
    const Eigen::VectorXd x = embed(cut, theta);
    const LossAndGradient lg = field.loss_and_input_gradient(x, target.p);
    if (!std::isfinite(lg.loss) || !lg.gradient.allFinite())
      throw Divergence("probe loss became non-finite", static_cast<std::size_t>(step));
    if (step == 0) result.initial_loss = lg.loss;
    if (lg.loss < best_loss) {
      best_loss = lg.loss;
      best_theta = theta;
    }
    const Eigen::VectorXd g = cut.basis * lg.gradient;
    if (g.norm() < config.gradient_tolerance) {
      result.converged = true;
      result.steps_used = step;
      break;
    }
    if (step == config.max_steps) {
      result.steps_used = step;
      break;
    }
    const double t = step + 1.0;
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    theta.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + config.epsilon);
  }

  result.theta_norm = best_theta.norm();
  result.theta_min = best_theta;
  result.p_max = field.evaluate(embed(cut, best_theta));
  result.loss_min = cross_entropy(result.p_max, target.p);
  if (target.kind == TargetKind::one_hot) result.target_component = result.p_max[target.classes[0]];
  return result;
}

ProbeResult probe(const ConfidenceField& field, int cut_dim, const TargetVector& target,
                  const OffsetPolicy& offsets, const ProbeConfig& config, std::uint64_t seed) {
  validate(config);
  validate_target(target.p, field.class_count());
  const int dim = field.ambient_dim();
  if (cut_dim < 1 || cut_dim > dim)
    throw InvalidDimension("cut dimension " + std::to_string(cut_dim) + " outside [1, " +
                           std::to_string(dim) + "]");

  Rng rng(seed);
  ProbeResult result;
  result.cut_dim = cut_dim;
  result.seed = seed;

  AffineCut cut = draw_cut(dim, cut_dim, offsets, config, rng);

  bool use_gaussian = offsets.kind == OffsetPolicy::Kind::gaussian;
  if (!use_gaussian) {
    if (offsets.data == nullptr) throw InvalidArgument("dataset offset policy without data");
    if (offsets.data->dim() != dim) throw InvalidDimension("offset dataset has wrong dimension");
    const auto pool = offset_pool(*offsets.data, target.classes);
    if (pool.empty()) {
      use_gaussian = true;
      result.offset_fallback = true;
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      result.offset_index = pool[pick(rng)];
      cut.offset = offsets.data->inputs.row(result.offset_index).transpose();
    }
  }
  if (use_gaussian) {
    cut.offset = offsets.scale * standard_normal_vector(dim, rng);
    if (offsets.center.size() == dim) cut.offset += offsets.center;
  }

  ProbeResult optimum = optimize_on_cut(field, cut, target, config);
  optimum.seed = result.seed;
  optimum.offset_index = result.offset_index;
  optimum.offset_fallback = result.offset_fallback;
  return optimum;
}


std::uint64_t probe_seed(std::uint64_t master_seed, int cut_dim, int repeat) {
  return derive_seed(master_seed, static_cast<std::uint64_t>(cut_dim),
                     static_cast<std::uint64_t>(repeat));
}

SweepResult sweep(const ConfidenceField& field, const TargetVector& target,
                  const OffsetPolicy& offsets, const SweepConfig& config) {
  if (config.dims.empty()) throw InvalidArgument("sweep needs at least one cut dimension");
  if (config.repeats < 1) throw InvalidArgument("sweep needs at least one repeat");
  for (std::size_t i = 0; i < config.dims.size(); ++i) {
    if (config.dims[i] < 1 || config.dims[i] > field.ambient_dim())
      throw InvalidDimension("sweep dimension " + std::to_string(config.dims[i]) + " out of range");
    if (i > 0 && config.dims[i] <= config.dims[i - 1])
      throw InvalidArgument("sweep dimensions must be strictly increasing");
  }
  validate(config.probe);
  validate_target(target.p, field.class_count());

  SweepResult out;
  out.field_descriptor = field.describe();
  out.target = target;
  out.dims = config.dims;
  out.repeats = config.repeats;
  out.master_seed = config.master_seed;
  out.results.assign(config.dims.size(), std::vector<ProbeResult>(config.repeats));

  const std::size_t tasks = config.dims.size() * static_cast<std::size_t>(config.repeats);
  parallel_for(tasks, config.threads, [&](std::size_t task) {
    const std::size_t i = task / config.repeats;
    const int r = static_cast<int>(task % config.repeats);
    const int d = config.dims[i];
    const std::uint64_t seed = probe_seed(config.master_seed, d, r);
    ProbeResult& slot = out.results[i][r];
    try {
      slot = probe(field, d, target, offsets, config.probe, seed);
    } catch (const Error& e) {
      slot = ProbeResult{};
      slot.cut_dim = d;
      slot.seed = seed;
      slot.failed = true;
      slot.failure = e.what();
      slot.p_max = Eigen::VectorXd::Zero(field.class_count());
      slot.loss_min = std::numeric_limits<double>::infinity();
      if (target.kind == TargetKind::one_hot) slot.target_component = 0.0;
    }
  });
  return out;
}

namespace {

void put(std::ostringstream& os, double v) { os << format_double(v); }

}  // namespace

std::string sweep_csv(const SweepResult& result) {
  std::ostringstream os;
  os << "d,seed,target_component,L_min,steps,converged,offset_index,theta_norm\n";
  for (const auto& row : result.results) {
    for (const auto& p : row) {
      os << p.cut_dim << ',' << p.seed << ',';
      if (p.target_component) put(os, *p.target_component);
      os << ',';
      put(os, p.loss_min);
      os << ',' << p.steps_used << ',' << (p.converged ? 1 : 0) << ',' << p.offset_index << ',';
      put(os, p.theta_norm);
      os << '\n';
    }
  }
  return os.str();
}

std::vector<CurvePoint> probability_points(const SweepResult& result) {
  if (result.target.kind != TargetKind::one_hot)
    throw InvalidArgument("probability curves need a one_hot target");
  std::vector<CurvePoint> pts;
  for (const auto& row : result.results)
    for (const auto& p : row)
      pts.push_back({static_cast<double>(p.cut_dim), p.failed ? 0.0 : p.target_component.value_or(0.0)});
  return pts;
}

std::vector<CurvePoint> loss_points(const SweepResult& result) {
  std::vector<CurvePoint> pts;
  for (const auto& row : result.results)
    for (const auto& p : row)
      if (!p.failed) pts.push_back({static_cast<double>(p.cut_dim), p.loss_min});
  return pts;
}

std::vector<double> median_target_component(const SweepResult& result) {
  std::vector<double> out;
  for (const auto& row : result.results) {
    std::vector<double> v;
    for (const auto& p : row) v.push_back(p.failed ? 0.0 : p.target_component.value_or(0.0));
    out.push_back(quantile(v, 0.5));
  }
  return out;
}

}  // namespace subtomo

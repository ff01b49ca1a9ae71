#include "subtomo_cli/builders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "subtomo/error.hpp"
#include "subtomo/format.hpp"
#include "subtomo/geometry.hpp"
#include "subtomo/random.hpp"

namespace subtomo::cli {

namespace {

std::string key(const std::string& prefix, const char* name) { return prefix + "." + name; }

// Stratified split; each class sends round(fraction * n_c) rows to test.
DataBundle split(const Dataset& data, double test_fraction, Rng& rng) {
  DataBundle out;
  if (test_fraction <= 0.0) {
    out.train = data;
    return out;
  }
  std::vector<int> train_rows, test_rows;
  for (int c = 0; c < data.class_count; ++c) {
    std::vector<int> members;
    for (int i = 0; i < data.size(); ++i)
      if (data.labels[i] == c) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * members.size()));
    test_rows.insert(test_rows.end(), members.begin(), members.begin() + n_test);
    train_rows.insert(train_rows.end(), members.begin() + n_test, members.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  out.train = data.select(train_rows);
  out.test = data.select(test_rows);
  out.test.split = Split::test;
  return out;
}

}  // namespace

DataBundle build_data(ConfigReader& cfg, const std::string& prefix, std::uint64_t seed,
                      double default_test_fraction) {
  Rng rng(derive_seed(seed, kDatasetStream));
  const std::string kind = cfg.get_choice(key(prefix, "kind"), "blobs", {"blobs", "planted", "csv"});
  Dataset data;
  if (kind == "blobs") {
    const int D = cfg.get_int(key(prefix, "ambient_dim"), 32, 1);
    const int C = cfg.get_int(key(prefix, "classes"), 4, 2);
    const int n = cfg.get_int(key(prefix, "per_class"), 200, 1);
    const double sep = cfg.get_double(key(prefix, "separation"), 6.0, 1e-12);
    const double sigma = cfg.get_double(key(prefix, "noise_sigma"), 1.0, 1e-12);
    const int support = cfg.get_int(key(prefix, "center_support"), 0, 0, D);
    // Each class can be a mixture of several clusters; cluster i gets label i mod C.
    const int clusters = cfg.get_int(key(prefix, "clusters_per_class"), 1, 1);
    if (n % clusters != 0)
      throw ConfigError("config key '" + key(prefix, "clusters_per_class") + "': must divide per_class");
    data = gen_blobs(D, C * clusters, n / clusters, sep, sigma, rng, support);
    for (int& label : data.labels) label %= C;
    data.class_count = C;
  } else if (kind == "planted") {
    const int D = cfg.get_int(key(prefix, "ambient_dim"), 32, 1);
    const int C = cfg.get_int(key(prefix, "classes"), 4, 2);
    const int n = cfg.get_int(key(prefix, "per_class"), 200, 1);
    std::vector<int> dims = cfg.get_int_list(key(prefix, "intrinsic_dims"), {4}, 1, D);
    if (dims.size() == 1) dims.assign(C, dims[0]);
    if (static_cast<int>(dims.size()) != C)
      throw ConfigError("config key '" + key(prefix, "intrinsic_dims") + "': need 1 or " +
                        std::to_string(C) + " entries");
    const double thickness = cfg.get_double(key(prefix, "thickness"), 0.05, 0.0);
    data = gen_planted_manifold_classes(D, C, dims, thickness, n, rng);
  } else {
    const std::string path = cfg.get_string(key(prefix, "path"), "");
    if (path.empty()) throw ConfigError("config key '" + key(prefix, "path") + "' is required for csv data");
    data = load_csv(path);
  }

  const double test_fraction = cfg.get_double(key(prefix, "test_fraction"), default_test_fraction, 0.0, 0.9);
  DataBundle out = split(data, test_fraction, rng);

  const int keep = cfg.get_int(key(prefix, "subsample"), 0, 0);
  if (keep > 0) {
    if (keep > out.train.size())
      throw ConfigError("config key '" + key(prefix, "subsample") + "': " + std::to_string(keep) +
                        " exceeds " + std::to_string(out.train.size()) + " training rows");
    out.train = subsample(out.train, keep, rng);
  }
  if (cfg.get_bool(key(prefix, "permute_labels"), false)) out.train = permute_labels(out.train, rng);
  const int copies = cfg.get_int(key(prefix, "augment_copies"), 0, 0);
  if (copies > 0) out.train = augment(out.train, cfg.get_double(key(prefix, "augment_sigma"), 0.1, 0.0), copies, rng);
  return out;
}

std::unique_ptr<ConfidenceField> build_field(ConfigReader& cfg, const std::string& prefix,
                                             std::uint64_t seed) {
  Rng rng(derive_seed(seed, kFieldStream));
  const std::string kind =
      cfg.get_choice(key(prefix, "kind"), "slab", {"slab", "cap", "linear", "mlp", "ensemble"});
  if (kind == "slab") {
    const int D = cfg.get_int(key(prefix, "ambient_dim"), 64, 1);
    const int n = cfg.get_int(key(prefix, "manifold_dim"), 48, 1, D);
    const double eps = cfg.get_double(key(prefix, "half_width"), 1.0, 1e-12);
    const double tau = cfg.get_double(key(prefix, "temperature"), eps / 8.0, 1e-12);
    const int C = cfg.get_int(key(prefix, "classes"), 2, 2);
    const int pos = cfg.get_int(key(prefix, "positive_class"), 0, 0, C - 1);
    AffineCut planted = sample_cut(D, n, D, rng);
    planted.offset = cfg.get_double(key(prefix, "offset_scale"), 0.0, 0.0) * standard_normal_vector(D, rng);
    return std::make_unique<SlabField>(std::move(planted), eps, tau, pos, C);
  }
  if (kind == "cap") {
    const int D = cfg.get_int(key(prefix, "ambient_dim"), 64, 2);
    const double angle = cfg.get_double(key(prefix, "cap_angle"), 0.5, 0.0, 3.14159265358979);
    const double sharpness = cfg.get_double(key(prefix, "sharpness"), 0.05, 1e-12);
    const int C = cfg.get_int(key(prefix, "classes"), 2, 2);
    const int pos = cfg.get_int(key(prefix, "positive_class"), 0, 0, C - 1);
    return std::make_unique<SphericalCapField>(Eigen::VectorXd::Zero(D), standard_normal_vector(D, rng),
                                               angle, sharpness, pos, C);
  }
  if (kind == "linear") {
    const int D = cfg.get_int(key(prefix, "ambient_dim"), 32, 1);
    const int C = cfg.get_int(key(prefix, "classes"), 4, 2);
    const double scale = cfg.get_double(key(prefix, "weight_scale"), 1.0, 0.0);
    return std::make_unique<LinearSoftmaxField>(scale * standard_normal_matrix(C, D, rng),
                                                scale * standard_normal_vector(C, rng));
  }
  if (kind == "mlp") {
    const std::string path = cfg.get_string(key(prefix, "model"), "");
    if (path.empty()) throw ConfigError("config key '" + key(prefix, "model") + "' is required for mlp fields");
    return std::make_unique<MlpModel>(load_model(path));
  }
  const auto paths = cfg.get_string_list(key(prefix, "models"), {});
  if (paths.empty()) throw ConfigError("config key '" + key(prefix, "models") + "' is required for ensembles");
  std::vector<MlpModel> members;
  for (const auto& p : paths) members.push_back(load_model(p));
  return std::make_unique<EnsembleModel>(std::move(members));
}

TargetVector build_target(ConfigReader& cfg, const std::string& prefix, int class_count) {
  const std::string kind = cfg.get_choice(key(prefix, "kind"), "one_hot", {"one_hot", "boundary", "uniform"});
  if (kind == "uniform") return uniform_target(class_count);
  const auto classes = cfg.get_int_list(key(prefix, "classes"), kind == "one_hot" ? std::vector<int>{0} : std::vector<int>{0, 1},
                                        0, class_count - 1);
  if (kind == "one_hot") {
    if (classes.size() != 1)
      throw ConfigError("config key '" + key(prefix, "classes") + "': one_hot takes exactly one class");
    return one_hot_target(classes[0], class_count);
  }
  try {
    return boundary_target(classes, class_count);
  } catch (const InvalidArgument& e) {
    throw ConfigError("config key '" + key(prefix, "classes") + "': " + e.what());
  }
}

ProbeConfig build_probe(ConfigReader& cfg, const std::string& prefix) {
  ProbeConfig p;
  p.learning_rate = cfg.get_double(key(prefix, "learning_rate"), p.learning_rate, 1e-300);
  p.max_steps = cfg.get_int(key(prefix, "max_steps"), p.max_steps, 0);
  p.gradient_tolerance = cfg.get_double(key(prefix, "gradient_tolerance"), p.gradient_tolerance, 0.0);
  p.beta1 = cfg.get_double(key(prefix, "beta1"), p.beta1, 0.0, 0.999999);
  p.beta2 = cfg.get_double(key(prefix, "beta2"), p.beta2, 0.0, 0.999999999);
  p.epsilon = cfg.get_double(key(prefix, "epsilon"), p.epsilon, 1e-300);
  p.sparsity = cfg.get_int(key(prefix, "sparsity"), 0, 0);
  p.span = cfg.get_choice(key(prefix, "span"), "gaussian", {"gaussian", "data_difference"}) == "gaussian"
               ? SpanMode::gaussian
               : SpanMode::data_difference;
  return p;
}

OffsetPolicy build_offsets(ConfigReader& cfg, const std::string& prefix, const Dataset* data) {
  const std::string kind = cfg.get_choice(key(prefix, "kind"), data ? "dataset" : "gaussian", {"gaussian", "dataset"});
  if (kind == "dataset") {
    if (data == nullptr) throw ConfigError("config key '" + key(prefix, "kind") + "': dataset offsets need a dataset block");
    return OffsetPolicy::from_dataset(*data);
  }
  return OffsetPolicy::gaussian(cfg.get_double(key(prefix, "scale"), 1.0, 0.0));
}

std::vector<int> default_dims(int ambient_dim) {
  std::vector<int> dims;
  for (int d : {1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256, 384, 512, 768, 1024,
                1536, 2048, 3072, 4096})
    if (d <= ambient_dim) dims.push_back(d);
  if (dims.back() != ambient_dim) dims.push_back(ambient_dim);
  return dims;
}

std::vector<double> default_thresholds() { return {0.25, 0.5, 0.75, 0.9}; }

SweepConfig build_sweep(ConfigReader& cfg, const std::string& prefix, int ambient_dim,
                        std::uint64_t master_seed, int threads) {
  SweepConfig s;
  s.dims = cfg.get_int_list(key(prefix, "dims"), default_dims(ambient_dim), 1, ambient_dim);
  for (std::size_t i = 1; i < s.dims.size(); ++i)
    if (s.dims[i] <= s.dims[i - 1])
      throw ConfigError("config key '" + key(prefix, "dims") + "': values must be strictly increasing");
  s.repeats = cfg.get_int(key(prefix, "repeats"), 10, 1);
  s.master_seed = derive_seed(master_seed, kSweepStream);
  s.threads = threads;
  return s;
}

TrainConfig build_train(ConfigReader& cfg, const std::string& prefix, std::uint64_t seed) {
  TrainConfig t;
  t.optimizer = cfg.get_choice(key(prefix, "optimizer"), "adam", {"adam", "sgd_momentum"}) == "adam"
                    ? OptimizerKind::adam
                    : OptimizerKind::sgd_momentum;
  t.learning_rate = cfg.get_double(key(prefix, "learning_rate"), t.learning_rate, 0.0);
  t.beta1 = cfg.get_double(key(prefix, "beta1"), t.beta1, 0.0, 0.999999);
  t.beta2 = cfg.get_double(key(prefix, "beta2"), t.beta2, 0.0, 0.999999999);
  t.epsilon = cfg.get_double(key(prefix, "epsilon"), t.epsilon, 1e-300);
  t.momentum = cfg.get_double(key(prefix, "momentum"), t.momentum, 0.0, 0.999999);
  t.epochs = cfg.get_int(key(prefix, "epochs"), t.epochs, 1);
  t.batch_size = cfg.get_int(key(prefix, "batch_size"), t.batch_size, 1);
  t.l2_coefficient = cfg.get_double(key(prefix, "l2"), t.l2_coefficient, 0.0);
  t.seed = derive_seed(seed, kTrainStream);
  return t;
}

std::vector<int> build_layers(ConfigReader& cfg, const std::string& prefix, int ambient_dim,
                              int class_count) {
  std::vector<int> dims{ambient_dim};
  for (int h : cfg.get_int_list(key(prefix, "hidden"), {64, 64}, 1)) dims.push_back(h);
  dims.push_back(class_count);
  return dims;
}

// ---------------------------------------------------------------------------

SweepAnalysis analyze_sweep(const SweepResult& sweep, int ambient_dim,
                            const std::vector<double>& thresholds, std::uint64_t band_seed) {
  SweepAnalysis out;
  out.probability = sweep.target.kind == TargetKind::one_hot;
  for (const auto& row : sweep.results) {
    std::vector<double> v;
    for (const auto& p : row) {
      if (out.probability) v.push_back(p.failed ? 0.0 : p.target_component.value_or(0.0));
      else if (!p.failed) v.push_back(std::exp(-p.loss_min));
    }
    out.medians.push_back(v.empty() ? 0.0 : quantile(v, 0.5));
  }
  try {
    const auto pts = out.probability ? probability_points(sweep) : loss_points(sweep);
    out.fit = out.probability ? fit_prob_curve(pts) : fit_loss_curve(pts);
    out.fit_status = out.fit->degenerate ? "degenerate" : "ok";
  } catch (const Error& e) {
    out.fit_status = std::string("failed: ") + e.what();
  }

  const double d_lo = sweep.dims.front(), d_hi = sweep.dims.back();
  const double m_max = *std::max_element(out.medians.begin(), out.medians.end());
  const double m_min = *std::min_element(out.medians.begin(), out.medians.end());
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    DstarRow row;
    row.threshold = thresholds[i];
    if (out.fit && !out.fit->degenerate) {
      try {
        row.critical = extract_dstar(*out.fit, thresholds[i], ambient_dim, derive_seed(band_seed, i));
      } catch (const Error&) {
      }
    }
    if (row.critical && row.critical->d_star >= 0.5 * d_lo && row.critical->d_star <= 2.0 * d_hi) {
      row.status = "ok";
      row.effective = std::clamp(row.critical->d_star, d_lo, d_hi);
    } else if (m_min >= thresholds[i]) {
      row.status = "below_range";
      row.effective = d_lo;
    } else if (m_max < thresholds[i]) {
      row.status = "above_range";
      row.effective = d_hi;
    } else if (row.critical) {
      row.status = "ok";
      row.effective = std::clamp(row.critical->d_star, d_lo, d_hi);
    } else {
      row.status = "no_fit";
      row.effective = std::nan("");
    }
    out.table.push_back(row);
  }
  return out;
}

nlohmann::ordered_json analysis_json(const SweepAnalysis& a) {
  nlohmann::ordered_json j;
  j["curve"] = a.probability ? "probability" : "loss";
  j["fit_status"] = a.fit_status;
  if (a.fit) {
    const auto& p = a.fit->params;
    j["params"] = {{"a", p.a}, {"b", p.b}, {"c", p.c}, {"s", p.s}};
    nlohmann::ordered_json cov = nlohmann::ordered_json::array();
    for (int r = 0; r < 4; ++r) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (int c = 0; c < 4; ++c) row.push_back(a.fit->covariance(r, c));
      cov.push_back(row);
    }
    j["covariance"] = cov;
    j["residual_rms"] = a.fit->residual_rms;
    j["n_points"] = a.fit->n_points;
  }
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (const auto& row : a.table) {
    nlohmann::ordered_json r;
    r["threshold"] = row.threshold;
    r["status"] = row.status;
    if (row.critical && row.status == "ok") {
      r["d_star"] = row.critical->d_star;
      r["lo"] = row.critical->lo;
      r["hi"] = row.critical->hi;
      r["manifold_dim"] = row.critical->manifold_dim;
      r["band_samples"] = row.critical->band_samples;
    }
    table.push_back(r);
  }
  j["d_star"] = table;
  j["medians"] = a.medians;
  return j;
}

std::string dstar_csv_rows(const SweepAnalysis& a, const std::string& prefix_columns) {
  std::string out;
  for (const auto& row : a.table) {
    out += prefix_columns + format_double(row.threshold) + ',' + row.status + ',';
    if (row.critical && row.status == "ok") {
      out += format_double(row.critical->d_star) + ',' + format_double(row.critical->lo) + ',' +
             format_double(row.critical->hi) + ',' + format_double(row.critical->manifold_dim);
    } else {
      out += ",,,";
    }
    out += ',' + format_double(row.effective) + '\n';
  }
  return out;
}

}  // namespace subtomo::cli

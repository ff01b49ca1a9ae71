#include "subtomo_cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>

#include <Eigen/Cholesky>

#include "subtomo/error.hpp"
#include "subtomo/format.hpp"
#include "subtomo/geometry.hpp"
#include "subtomo/metrics.hpp"
#include "subtomo/parallel.hpp"
#include "subtomo/random.hpp"
#include "subtomo_cli/builders.hpp"
#include "subtomo_cli/output.hpp"

namespace subtomo::cli {

namespace {

std::string f(double v) { return format_double(v); }

}  // namespace

void run_tomography(RunContext& ctx) {
  ConfigReader& cfg = ctx.cfg;
  const auto field = build_field(cfg, "field", ctx.seed);
  const int D = field->ambient_dim();
  std::optional<DataBundle> data;
  if (cfg.has("dataset")) {
    data = build_data(cfg, "dataset", ctx.seed);
    if (data->train.dim() != D)
      throw ConfigError("config key 'dataset.ambient_dim': dataset dimension " +
                        std::to_string(data->train.dim()) + " does not match the field (" +
                        std::to_string(D) + ")");
  }
  const TargetVector target = build_target(cfg, "target", field->class_count());
  const OffsetPolicy offsets = build_offsets(cfg, "offsets", data ? &data->train : nullptr);
  SweepConfig sc = build_sweep(cfg, "sweep", D, ctx.seed, ctx.threads);
  sc.probe = build_probe(cfg, "probe");
  const auto thresholds = cfg.get_double_list("fit.thresholds", default_thresholds());
  for (double t : thresholds)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("config key 'fit.thresholds': values must lie in (0, 1)");
  cfg.check_unknown();

  OutputDir out(ctx.out_dir, "tomography", cfg.hash_hex(), ctx.seed);
  ctx.log << "tomography: " << field->describe() << ", target " << target.describe() << ", "
          << sc.dims.size() << " dims x " << sc.repeats << " repeats\n";
  const SweepResult result = sweep(*field, target, offsets, sc);
  const SweepAnalysis analysis = analyze_sweep(result, D, thresholds, derive_seed(ctx.seed, kBandStream));

  out.write_csv("sweep.csv", sweep_csv(result));
  nlohmann::ordered_json report;
  report["field"] = field->describe();
  report["target"] = target.describe();
  report["ambient_dim"] = D;
  report["dims"] = result.dims;
  report["repeats"] = result.repeats;
  int failed = 0;
  for (const auto& row : result.results)
    for (const auto& p : row) failed += p.failed ? 1 : 0;
  report["failed_probes"] = failed;
  const auto fit_json = analysis_json(analysis);
  for (auto it = fit_json.begin(); it != fit_json.end(); ++it) report[it.key()] = it.value();
  out.write_json("fit_report.json", report);
  out.write_csv("dstar.csv", "threshold,status,d_star,lo,hi,manifold_dim,effective\n" +
                                 dstar_csv_rows(analysis, ""));
  out.write_provenance(cfg);

  for (const auto& row : analysis.table) {
    ctx.out << "d*" << std::setw(2) << static_cast<int>(std::lround(row.threshold * 100)) << " ";
    if (row.status == "ok")
      ctx.out << f(row.critical->d_star) << " [" << f(row.critical->lo) << ", " << f(row.critical->hi) << "]\n";
    else
      ctx.out << row.status << '\n';
  }
}

void run_affine_distance(RunContext& ctx) {
  ConfigReader& cfg = ctx.cfg;
  const auto ambient = cfg.get_int_list("distance.ambient_dims", {64, 100}, 2);
  const auto fractions = cfg.get_double_list("distance.fractions", {0.0625, 0.125, 0.25, 0.375, 0.5, 0.625});
  for (double v : fractions)
    if (!(v > 0.0 && v < 1.0)) throw ConfigError("config key 'distance.fractions': values must lie in (0, 1)");
  const int pairs = cfg.get_int("distance.pairs", 100, 1);
  const double offset_scale = cfg.get_double("distance.offset_scale", 1.0, 0.0);
  cfg.check_unknown();
  OutputDir out(ctx.out_dir, "affine-distance", cfg.hash_hex(), ctx.seed);

  struct Row {
    int D, n, d;
    double mean = 0.0, sd = 0.0, theory = 0.0, fitted = 0.0;
  };
  std::vector<Row> rows;
  for (int D : ambient) {
    std::vector<int> sizes;
    for (double v : fractions) sizes.push_back(std::clamp(static_cast<int>(std::lround(v * D)), 1, D));
    std::sort(sizes.begin(), sizes.end());
    sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
    for (std::size_t i = 0; i < sizes.size(); ++i)
      for (std::size_t j = i; j < sizes.size(); ++j) rows.push_back({D, sizes[i], sizes[j]});
  }
  ctx.log << "affine-distance: " << rows.size() << " grid points x " << pairs << " pairs\n";

  parallel_for(rows.size(), ctx.threads, [&](std::size_t i) {
    Row& r = rows[i];
    Rng rng(derive_seed(ctx.seed, kGeometryStream, i));
    std::vector<double> dist;
    for (int k = 0; k < pairs; ++k) {
      AffineCut a = sample_cut(r.D, r.n, r.D, rng);
      a.offset = offset_scale * standard_normal_vector(r.D, rng);
      AffineCut b = sample_cut(r.D, r.d, r.D, rng);
      b.offset = offset_scale * standard_normal_vector(r.D, rng);
      dist.push_back(measure_closest_distance(a, b).distance);
    }
    double sum = 0.0, ss = 0.0;
    for (double v : dist) sum += v;
    r.mean = sum / pairs;
    for (double v : dist) ss += (v - r.mean) * (v - r.mean);
    r.sd = pairs > 1 ? std::sqrt(ss / (pairs - 1)) : 0.0;
    r.theory = expected_closest_distance(r.D, r.n, r.d).scale;
  });

  // One constant per D, least squares through the origin.
  nlohmann::ordered_json per_d = nlohmann::ordered_json::array();
  for (int D : ambient) {
    double num = 0.0, den = 0.0;
    for (const auto& r : rows)
      if (r.D == D) num += r.mean * r.theory, den += r.theory * r.theory;
    const double kappa = den > 0.0 ? num / den : 0.0;
    double sq = 0.0, lo = 1e300, hi = -1e300, worst_zero = 0.0;
    int count = 0;
    for (auto& r : rows) {
      if (r.D != D) continue;
      r.fitted = kappa * r.theory;
      sq += (r.mean - r.fitted) * (r.mean - r.fitted);
      lo = std::min(lo, r.fitted);
      hi = std::max(hi, r.fitted);
      ++count;
      if (r.n + r.d >= D) worst_zero = std::max(worst_zero, r.mean);
    }
    const double rmse = std::sqrt(sq / count);
    nlohmann::ordered_json j;
    j["D"] = D;
    j["constant"] = kappa;
    j["rmse"] = rmse;
    j["curve_range"] = hi - lo;
    j["rmse_fraction"] = hi > lo ? rmse / (hi - lo) : 0.0;
    j["max_intersecting_mean_dist"] = worst_zero;
    per_d.push_back(j);
    ctx.out << "D=" << D << " constant=" << f(kappa) << " rmse/range=" << f(j["rmse_fraction"].get<double>())
            << '\n';
  }

  std::ostringstream csv;
  csv << "D,n,d,mean_dist,std,theory,fitted\n";
  for (const auto& r : rows)
    csv << r.D << ',' << r.n << ',' << r.d << ',' << f(r.mean) << ',' << f(r.sd) << ',' << f(r.theory)
        << ',' << f(r.fitted) << '\n';
  out.write_csv("distance.csv", csv.str());
  nlohmann::ordered_json report;
  report["pairs"] = pairs;
  report["fits"] = per_d;
  out.write_json("distance_report.json", report);
  out.write_provenance(cfg);
}

void run_train(RunContext& ctx) {
  ConfigReader& cfg = ctx.cfg;
  const DataBundle data = build_data(cfg, "dataset", ctx.seed);
  const auto layers = build_layers(cfg, "model", data.train.dim(), data.train.class_count);
  const TrainConfig tc = build_train(cfg, "train", ctx.seed);
  const bool save_data = cfg.get_bool("train.save_data", false);
  cfg.check_unknown();
  OutputDir out(ctx.out_dir, "train", cfg.hash_hex(), ctx.seed);

  Rng init(derive_seed(ctx.seed, kInitStream));
  MlpModel model = MlpModel::he_initialized(layers, init);
  ctx.log << "train: " << model.describe() << " on " << data.train.size() << " rows\n";
  const Dataset* test = data.test.size() > 0 ? &data.test : nullptr;
  const auto metrics = train(model, data.train, test, tc, [&](const EpochMetrics& m, const MlpModel&) {
    ctx.log << "  epoch " << m.epoch << " loss " << f(m.train_loss) << '\n';
  });
  out.write_bytes("model.bin", serialize_model(model));
  out.write_csv("train_metrics.csv", metrics_csv(metrics));
  if (save_data) {
    out.write_csv("train_data.csv", to_csv(data.train));
    if (test) out.write_csv("test_data.csv", to_csv(data.test));
  }
  out.write_provenance(cfg);
  const auto& last = metrics.back();
  ctx.out << "train_acc=" << f(last.train_accuracy);
  if (test) ctx.out << " test_acc=" << f(last.test_accuracy);
  ctx.out << '\n';
}

void run_dataset_dim(RunContext& ctx) {
  ConfigReader& cfg = ctx.cfg;
  const DataBundle data = build_data(cfg, "dataset", ctx.seed, 0.0);
  DatasetMetricsConfig mc;
  mc.n_directions = cfg.get_int("metrics.directions", mc.n_directions, 1);
  mc.center_draws = cfg.get_int("metrics.center_draws", mc.center_draws, 1);
  mc.oracle = cfg.get_choice("metrics.oracle", "sample_max", {"sample_max", "span_sphere"}) == "sample_max"
                  ? DataWidthOracle::sample_max
                  : DataWidthOracle::span_sphere;
  mc.threads = ctx.threads;
  cfg.check_unknown();
  OutputDir out(ctx.out_dir, "dataset-dim", cfg.hash_hex(), ctx.seed);
  ctx.log << "dataset-dim: " << data.train.size() << " rows, " << data.train.class_count << " classes\n";
  const auto rows = dataset_metrics(data.train, mc, derive_seed(ctx.seed, kMetricsStream));
  const std::string csv = metrics_csv(rows);
  out.write_csv("metrics.csv", csv);
  out.write_provenance(cfg);
  ctx.out << csv;
}

void run_gordon(RunContext& ctx) {
  ConfigReader& cfg = ctx.cfg;
  const int D = cfg.get_int("gordon.ambient_dim", 256, 2);
  const auto angles = cfg.get_double_list("gordon.cap_angles", {0.05, 0.1, 0.2, 0.3, 0.5});
  for (double a : angles)
    if (!(a >= 0.0 && a < M_PI / 2))
      throw ConfigError("config key 'gordon.cap_angles': angles must lie in [0, pi/2)");
  const auto codims = cfg.get_int_list("gordon.codims", {32, 64, 96, 128, 160, 192, 224, 255}, 1, D - 1);
  const int cuts = cfg.get_int("gordon.cuts", 500, 1);
  cfg.check_unknown();
  OutputDir out(ctx.out_dir, "gordon", cfg.hash_hex(), ctx.seed);

  struct Row {
    double angle;
    int codim;
    double width = 0.0, miss = 0.0;
    std::optional<double> bound;
  };
  std::vector<Row> rows;
  for (double a : angles)
    for (int k : codims) rows.push_back({a, k, 0.0, 0.0, std::nullopt});
  ctx.log << "gordon: " << rows.size() << " grid points x " << cuts << " cuts\n";

  parallel_for(rows.size(), ctx.threads, [&](std::size_t i) {
    Row& r = rows[i];
    Rng rng(derive_seed(ctx.seed, kGeometryStream, i));
    const Eigen::VectorXd axis = standard_normal_vector(D, rng).normalized();
    const double c2 = std::cos(r.angle) * std::cos(r.angle);
    const int cut_dim = D - r.codim;
    int misses = 0;
    for (int t = 0; t < cuts; ++t) {
      // The linear cut misses the cap iff |P axis| < cos(angle). The row
      // span of a Gaussian matrix is a uniformly random subspace; draw
      // whichever of the cut and its complement is smaller and project
      // through the normal equations instead of orthonormalizing.
      const int m = std::min(cut_dim, r.codim);
      const Eigen::MatrixXd g = standard_normal_matrix(m, D, rng);
      const Eigen::VectorXd v = g * axis;
      const double q = v.dot((g * g.transpose()).llt().solve(v));
      const double proj2 = cut_dim <= r.codim ? q : 1.0 - q;
      if (proj2 < c2) ++misses;
    }
    r.width = cap_gaussian_width(D, r.angle);
    r.miss = static_cast<double>(misses) / cuts;
    r.bound = gordon_miss_bound(r.codim, r.width);
  });

  std::ostringstream csv;
  csv << "D,codim,cut_dim,angle,width,bound,miss_freq,vacuous,holds\n";
  ctx.out << "  angle  codim  width    bound    miss\n";
  for (const auto& r : rows) {
    const bool holds = !r.bound || r.miss >= *r.bound;
    csv << D << ',' << r.codim << ',' << D - r.codim << ',' << f(r.angle) << ',' << f(r.width) << ','
        << (r.bound ? f(*r.bound) : "") << ',' << f(r.miss) << ',' << (r.bound ? "false" : "true") << ','
        << (holds ? "true" : "false") << '\n';
    std::ostringstream line;
    line << std::fixed << std::setprecision(3) << std::setw(7) << r.angle << std::setw(7) << r.codim
         << std::setw(9) << r.width << std::setw(9);
    if (r.bound) line << *r.bound;
    else line << "vacuous";
    line << std::setw(8) << r.miss << '\n';
    ctx.out << line.str();
  }
  out.write_csv("gordon.csv", csv.str());
  out.write_provenance(cfg);
}

}  // namespace subtomo::cli

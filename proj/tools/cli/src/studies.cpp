#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "subtomo/error.hpp"
#include "subtomo/format.hpp"
#include "subtomo/random.hpp"
#include "subtomo_cli/builders.hpp"
#include "subtomo_cli/commands.hpp"
#include "subtomo_cli/output.hpp"

namespace subtomo::cli {

namespace {

std::string f(double v) { return format_double(v); }

// +1: d* should rise along the grid, -1: fall, 0: reported only.
int expected_direction(const std::string& kind) {
  if (kind == "random_labels" || kind == "ensemble") return 1;
  if (kind == "training_stage") return 0;
  return -1;
}

struct GridPoint {
  GridPoint() = default;
  GridPoint(int v, std::string l) : value(v), label(std::move(l)) {}

  int value = 0;
  std::string label;
  std::unique_ptr<ConfidenceField> field;
  double train_accuracy = std::nan("");
  double test_accuracy = std::nan("");
  std::string error;  // training failure, recorded and skipped
  int sparsity = 0;
  Dataset train_set;  // as trained on, labels included
};

// Pairs (i < j) ordered against the expected direction; ties are not inversions.
int count_inversions(const std::vector<double>& v, int direction) {
  int n = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j)
      if (std::isfinite(v[i]) && std::isfinite(v[j]) && direction * (v[j] - v[i]) < 0.0) ++n;
  return n;
}

struct StudySetup {
  DataBundle data;
  std::vector<int> hidden;
  TrainConfig train;
  ProbeConfig probe;
  SweepConfig sweep;
  double threshold = 0.5;
  std::vector<int> classes;
  std::vector<int> grid;
  bool offsets_from_data = true;
  bool offsets_from_train = false;
  bool equal_updates = false;
  double offset_scale = 1.0;
};

MlpModel train_model(const StudySetup& s, const Dataset& train_set, const std::vector<int>& hidden,
                     std::uint64_t init_seed, std::uint64_t train_seed, GridPoint& point,
                     int epochs = 0, const EpochCallback& on_epoch = {}) {
  std::vector<int> dims{train_set.dim()};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(train_set.class_count);
  Rng init(init_seed);
  MlpModel model = MlpModel::he_initialized(dims, init);
  TrainConfig tc = s.train;
  tc.seed = train_seed;
  if (epochs > 0) tc.epochs = epochs;
  const Dataset* test = s.data.test.size() > 0 ? &s.data.test : nullptr;
  const auto metrics = train(model, train_set, test, tc, on_epoch);
  point.train_accuracy = metrics.back().train_accuracy;
  point.test_accuracy = metrics.back().test_accuracy;
  return model;
}

std::vector<GridPoint> build_grid(const std::string& kind, const StudySetup& s, std::uint64_t seed,
                                  std::ostream& log) {
  std::vector<GridPoint> points;
  const std::uint64_t init_seed = derive_seed(seed, kInitStream);
  const std::uint64_t train_seed = derive_seed(seed, kTrainStream);
  auto attempt = [&](GridPoint& p, auto&& make) {
    try {
      p.field = make();
    } catch (const Error& e) {
      p.error = e.what();
      log << "  grid " << p.label << " failed: " << e.what() << '\n';
    }
  };

  if (kind == "random_labels") {
    for (int v : s.grid) {
      GridPoint p{v, v ? "permuted" : "true"};
      attempt(p, [&] {
        Dataset train_set = s.data.train;
        if (v) {
          Rng rng(derive_seed(seed, kDatasetStream, 1));
          train_set = permute_labels(train_set, rng);
        }
        p.train_set = train_set;
        return std::make_unique<MlpModel>(train_model(s, train_set, s.hidden, init_seed, train_seed, p));
      });
      points.push_back(std::move(p));
    }
  } else if (kind == "trainset_size") {
    for (int v : s.grid) {
      GridPoint p{v, std::to_string(v)};
      attempt(p, [&] {
        const int total = v * s.data.train.class_count;
        if (total > s.data.train.size())
          throw InvalidArgument(std::to_string(v) + " per class exceeds the training split");
        Rng rng(derive_seed(seed, kDatasetStream, 2));
        const Dataset train_set = subsample(s.data.train, total, rng);
        p.train_set = train_set;
        // Optionally hold the number of minibatch updates fixed across sizes.
        const int largest = s.grid.back();
        const int epochs = s.equal_updates
                               ? static_cast<int>(std::lround(static_cast<double>(s.train.epochs) * largest / v))
                               : 0;
        return std::make_unique<MlpModel>(
            train_model(s, train_set, s.hidden, init_seed, train_seed, p, epochs));
      });
      points.push_back(std::move(p));
    }
  } else if (kind == "ensemble") {
    // Nested ensembles: size k reuses the first k members.
    const int largest = *std::max_element(s.grid.begin(), s.grid.end());
    std::vector<MlpModel> members;
    std::string member_error;
    std::vector<double> member_test;
    for (int m = 0; m < largest && member_error.empty(); ++m) {
      GridPoint scratch;
      try {
        members.push_back(train_model(s, s.data.train, s.hidden, derive_seed(init_seed, m),
                                      derive_seed(train_seed, m), scratch));
        member_test.push_back(scratch.test_accuracy);
      } catch (const Error& e) {
        member_error = e.what();
      }
    }
    for (int v : s.grid) {
      GridPoint p{v, std::to_string(v)};
      if (v > static_cast<int>(members.size())) {
        p.error = "member training failed: " + member_error;
      } else {
        std::vector<MlpModel> subset(members.begin(), members.begin() + v);
        auto ensemble = std::make_unique<EnsembleModel>(std::move(subset));
        if (s.data.test.size() > 0) {
          int correct = 0;
          for (int i = 0; i < s.data.test.size(); ++i) {
            Eigen::Index arg;
            ensemble->evaluate(s.data.test.inputs.row(i).transpose()).maxCoeff(&arg);
            correct += arg == s.data.test.labels[i] ? 1 : 0;
          }
          p.test_accuracy = static_cast<double>(correct) / s.data.test.size();
        }
        p.field = std::move(ensemble);
      }
      points.push_back(std::move(p));
    }
  } else if (kind == "width") {
    for (int v : s.grid) {
      GridPoint p{v, std::to_string(v)};
      std::vector<int> hidden(s.hidden.size(), v);
      attempt(p, [&] {
        return std::make_unique<MlpModel>(train_model(s, s.data.train, hidden, init_seed, train_seed, p));
      });
      points.push_back(std::move(p));
    }
  } else if (kind == "sparsity") {
    GridPoint shared;
    std::shared_ptr<MlpModel> model;
    try {
      model = std::make_shared<MlpModel>(train_model(s, s.data.train, s.hidden, init_seed, train_seed, shared));
    } catch (const Error& e) {
      shared.error = e.what();
    }
    for (int v : s.grid) {
      GridPoint p{v, std::to_string(v)};
      p.sparsity = v >= s.data.train.dim() ? 0 : v;
      p.train_accuracy = shared.train_accuracy;
      p.test_accuracy = shared.test_accuracy;
      p.error = shared.error;
      if (model) p.field = std::make_unique<MlpModel>(*model);
      points.push_back(std::move(p));
    }
  } else {  // training_stage
    const int last = *std::max_element(s.grid.begin(), s.grid.end());
    std::map<int, std::pair<MlpModel, EpochMetrics>> snapshots;
    GridPoint scratch;
    std::string error;
    try {
      train_model(s, s.data.train, s.hidden, init_seed, train_seed, scratch, last,
                  [&](const EpochMetrics& m, const MlpModel& model) {
                    if (std::find(s.grid.begin(), s.grid.end(), m.epoch) != s.grid.end())
                      snapshots.emplace(m.epoch, std::make_pair(model, m));
                  });
    } catch (const Error& e) {
      error = e.what();
    }
    for (int v : s.grid) {
      GridPoint p{v, std::to_string(v)};
      if (auto it = snapshots.find(v); it != snapshots.end()) {
        p.field = std::make_unique<MlpModel>(it->second.first);
        p.train_accuracy = it->second.second.train_accuracy;
        p.test_accuracy = it->second.second.test_accuracy;
      } else {
        p.error = error.empty() ? "no snapshot" : error;
      }
      points.push_back(std::move(p));
    }
  }
  for (auto& p : points)
    if (p.train_set.size() == 0) p.train_set = s.data.train;
  return points;
}

}  // namespace

void run_study(RunContext& ctx, const std::string& kind) {
  static const std::vector<std::string> kinds{"random_labels", "trainset_size", "ensemble",
                                              "width",         "sparsity",      "training_stage"};
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end())
    throw ConfigError("unknown study kind '" + kind + "'");
  ConfigReader& cfg = ctx.cfg;
  StudySetup s;
  s.data = build_data(cfg, "dataset", ctx.seed);
  const int D = s.data.train.dim();
  const int C = s.data.train.class_count;
  s.hidden = cfg.get_int_list("model.hidden", {64, 64}, 1);
  s.train = build_train(cfg, "train", ctx.seed);
  s.probe = build_probe(cfg, "probe");
  s.sweep = build_sweep(cfg, "sweep", D, ctx.seed, ctx.threads);
  s.sweep.probe = s.probe;

  std::vector<int> default_grid;
  if (kind == "random_labels") default_grid = {0, 1};
  else if (kind == "trainset_size") default_grid = {50, 200, 800};
  else if (kind == "ensemble") default_grid = {1, 2, 4, 8};
  else if (kind == "width") default_grid = {16, 64, 256};
  else if (kind == "sparsity") default_grid = {1, 4, D};
  else default_grid = {1, 2, 5, 10, 20, 50};
  s.grid = cfg.get_int_list("study.grid", default_grid, kind == "random_labels" ? 0 : 1,
                            kind == "random_labels" ? 1 : INT32_MAX);
  if (s.grid.empty()) throw ConfigError("config key 'study.grid': grid must not be empty");
  for (std::size_t i = 1; i < s.grid.size(); ++i)
    if (s.grid[i] <= s.grid[i - 1])
      throw ConfigError("config key 'study.grid': values must be strictly increasing");
  s.threshold = cfg.get_double("study.threshold", kind == "sparsity" ? 0.25 : 0.5, 1e-6, 1.0 - 1e-6);
  std::vector<int> all(C);
  for (int c = 0; c < C; ++c) all[c] = c;
  s.classes = cfg.get_int_list("study.classes", all, 0, C - 1);
  s.offsets_from_data = cfg.get_choice("offsets.kind", "dataset", {"dataset", "gaussian"}) == "dataset";
  if (kind == "trainset_size") s.equal_updates = cfg.get_bool("study.equal_updates", false);
  s.offsets_from_train = cfg.get_choice("offsets.rows", "test", {"test", "train"}) == "train";
  s.offset_scale = cfg.get_double("offsets.scale", 1.0, 0.0);
  cfg.check_unknown();

  OutputDir out(ctx.out_dir, "study " + kind, cfg.hash_hex(), ctx.seed);
  ctx.log << "study " << kind << ": grid of " << s.grid.size() << ", " << s.classes.size()
          << " class targets\n";
  const auto points = build_grid(kind, s, ctx.seed, ctx.log);

  // Offsets come from held-out rows with their true labels, so every grid
  // point probes from the same starting points.
  const Dataset& offset_data = s.data.test.size() > 0 ? s.data.test : s.data.train;
  const OffsetPolicy offsets =
      s.offsets_from_data ? OffsetPolicy::from_dataset(offset_data) : OffsetPolicy::gaussian(s.offset_scale);

  std::ostringstream csv;
  csv << "grid,class,threshold,status,d_star,lo,hi,manifold_dim,effective\n";
  const int direction = expected_direction(kind);
  // effective[class index][grid index]
  std::vector<std::vector<double>> effective(s.classes.size(),
                                             std::vector<double>(points.size(), std::nan("")));
  nlohmann::ordered_json grid_json = nlohmann::ordered_json::array();
  for (std::size_t g = 0; g < points.size(); ++g) {
    const GridPoint& p = points[g];
    nlohmann::ordered_json gj;
    gj["grid"] = p.value;
    gj["label"] = p.label;
    if (std::isfinite(p.train_accuracy)) gj["train_accuracy"] = p.train_accuracy;
    if (std::isfinite(p.test_accuracy)) gj["test_accuracy"] = p.test_accuracy;
    if (!p.error.empty()) {
      gj["error"] = p.error;
      for (int c : s.classes)
        csv << p.value << ',' << c << ',' << f(s.threshold) << ",error,,,,,\n";
      grid_json.push_back(gj);
      continue;
    }
    const OffsetPolicy grid_offsets =
        s.offsets_from_data && s.offsets_from_train ? OffsetPolicy::from_dataset(p.train_set) : offsets;
    SweepConfig sc = s.sweep;
    sc.probe.sparsity = p.sparsity;
    for (std::size_t ci = 0; ci < s.classes.size(); ++ci) {
      const int c = s.classes[ci];
      ctx.log << "  grid " << p.label << ", class " << c << '\n';
      const std::string prefix = std::to_string(p.value) + ',' + std::to_string(c) + ',';
      try {
        const SweepResult result = sweep(*p.field, one_hot_target(c, C), grid_offsets, sc);
        const SweepAnalysis a = analyze_sweep(result, D, {s.threshold},
                                              derive_seed(ctx.seed, kBandStream, g * 1000 + c));
        csv << dstar_csv_rows(a, prefix);
        effective[ci][g] = a.table.front().effective;
      } catch (const Error& e) {
        ctx.log << "    failed: " << e.what() << '\n';
        csv << prefix << f(s.threshold) << ",error,,,,,\n";
      }
    }
    grid_json.push_back(gj);
  }

  std::vector<double> mean(points.size(), std::nan(""));
  for (std::size_t g = 0; g < points.size(); ++g) {
    double sum = 0.0;
    int n = 0;
    for (const auto& row : effective)
      if (std::isfinite(row[g])) sum += row[g], ++n;
    if (n > 0) mean[g] = sum / n;
    grid_json[g]["mean_effective_dstar"] = n > 0 ? nlohmann::ordered_json(mean[g]) : nlohmann::ordered_json();
  }

  nlohmann::ordered_json trend;
  trend["kind"] = kind;
  trend["threshold"] = s.threshold;
  trend["expected_direction"] = direction > 0 ? "increasing" : direction < 0 ? "decreasing" : "none";
  trend["grid"] = grid_json;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
  int agreeing = 0;
  for (std::size_t ci = 0; ci < s.classes.size(); ++ci) {
    nlohmann::ordered_json pc;
    pc["class"] = s.classes[ci];
    nlohmann::ordered_json vals = nlohmann::ordered_json::array();
    for (double v : effective[ci]) vals.push_back(std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json());
    pc["effective_dstar"] = vals;
    if (direction != 0) {
      pc["inversions"] = count_inversions(effective[ci], direction);
      const double first = effective[ci].front(), last = effective[ci].back();
      const bool agrees = std::isfinite(first) && std::isfinite(last) && direction * (last - first) > 0.0;
      pc["endpoints_agree"] = agrees;
      agreeing += agrees ? 1 : 0;
    }
    per_class.push_back(pc);
  }
  trend["classes"] = per_class;
  if (direction != 0) {
    const int inversions = count_inversions(mean, direction);
    const bool complete = std::all_of(mean.begin(), mean.end(), [](double v) { return std::isfinite(v); });
    trend["inversions"] = inversions;
    trend["classes_agreeing"] = agreeing;
    trend["endpoint_change"] = complete ? nlohmann::ordered_json(mean.back() - mean.front()) : nlohmann::ordered_json();
    // Two-point grids are judged by the class majority, longer ones by the
    // inversions of the class-mean series.
    const bool holds = complete && (points.size() == 2
                                        ? 2 * agreeing > static_cast<int>(s.classes.size())
                                        : inversions <= 1);
    trend["trend_holds"] = holds;
  }
  out.write_csv("study.csv", csv.str());
  out.write_json("trend.json", trend);
  out.write_provenance(cfg);

  for (std::size_t g = 0; g < points.size(); ++g)
    ctx.out << kind << ' ' << points[g].label << ": mean d*" << static_cast<int>(std::lround(s.threshold * 100))
            << " = " << (std::isfinite(mean[g]) ? f(mean[g]) : "n/a") << '\n';
  if (direction != 0) ctx.out << "trend " << (trend["trend_holds"].get<bool>() ? "holds" : "does not hold") << '\n';
}

}  // namespace subtomo::cli

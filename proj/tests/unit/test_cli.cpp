#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "subtomo/datasets.hpp"
#include "subtomo/fields.hpp"
#include "subtomo/geometry.hpp"
#include "subtomo/random.hpp"
#include "subtomo_cli/app.hpp"
#include "subtomo_cli/config.hpp"

namespace fs = std::filesystem;

namespace subtomo::cli {
namespace {

struct RunResult {
  int code = 0;
  std::string out;
  std::string err;
};

RunResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "subtomo");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  RunResult r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("subtomo_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  fs::path dir_;
};

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// Data rows of a CSV written by the tool (preamble and header dropped).
std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);  // preamble
  std::getline(in, line);  // header
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

// ---------------------------------------------------------------------------

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(ConfigReader, TypedReadsAndDefaults) {
  auto cfg = ConfigReader::from_string("a:\n  n: 3\n  x: 0.5\n  flag: true\n  name: hi\n  list: [1, 2]\n  one: 7\n");
  EXPECT_EQ(cfg.get_int("a.n", 0), 3);
  EXPECT_DOUBLE_EQ(cfg.get_double("a.x", 0.0), 0.5);
  EXPECT_TRUE(cfg.get_bool("a.flag", false));
  EXPECT_EQ(cfg.get_string("a.name", ""), "hi");
  EXPECT_EQ(cfg.get_int_list("a.list", {}), (std::vector<int>{1, 2}));
  EXPECT_EQ(cfg.get_int_list("a.one", {}), (std::vector<int>{7}));
  EXPECT_EQ(cfg.get_int("a.missing", 11), 11);
  EXPECT_EQ(cfg.get_u64("seed", 5), 5u);
  EXPECT_NO_THROW(cfg.check_unknown());
  EXPECT_NE(cfg.canonical().find("a.missing = 11"), std::string::npos);
}

TEST(ConfigReader, ErrorsNameTheKey) {
  auto cfg = ConfigReader::from_string("field:\n  ambient_dim: -3\n  temperature: abc\n");
  try {
    cfg.get_int("field.ambient_dim", 1, 1);
    FAIL() << "range violation not reported";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("field.ambient_dim"), std::string::npos);
  }
  try {
    cfg.get_double("field.temperature", 1.0);
    FAIL() << "type error not reported";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("field.temperature"), std::string::npos);
  }
  EXPECT_THROW(cfg.get_choice("field.kind", "oval", {"slab", "cap"}), ConfigError);
}

TEST(ConfigReader, UnknownKeysRejected) {
  auto cfg = ConfigReader::from_string("sweep:\n  repeats: 3\n  repaets: 4\n");
  cfg.get_int("sweep.repeats", 1);
  try {
    cfg.check_unknown();
    FAIL() << "typo accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("sweep.repaets"), std::string::npos);
  }
}

TEST(ConfigReader, SyntaxErrorsAreConfigErrors) {
  EXPECT_THROW(ConfigReader::from_string("a: [1, 2"), ConfigError);
  EXPECT_THROW(ConfigReader::from_string("- 1\n- 2\n"), ConfigError);
}

TEST(ConfigReader, HashTracksResolvedValues) {
  auto a = ConfigReader::from_string("x: 1\n");
  auto b = ConfigReader::from_string("x: 1.0\n");
  auto c = ConfigReader::from_string("x: 2\n");
  auto d = ConfigReader::from_string("{}");
  for (auto* cfg : {&a, &b, &c, &d}) cfg->get_double("x", 1.0);
  // Equal effective configs hash equal regardless of spelling or defaulting.
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash(), d.hash());
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(a.hash_hex().size(), 16u);
}

TEST(ConfigReader, OverridesAndUnhashedKeys) {
  auto cfg = ConfigReader::from_string("seed: 3\nthreads: 4\n");
  cfg.set_override("seed", "9");
  EXPECT_EQ(cfg.get_u64("seed", 0), 9u);
  const auto before = cfg.hash();
  EXPECT_EQ(cfg.get_unhashed_string("threads", "1"), "4");
  EXPECT_EQ(cfg.hash(), before);
  EXPECT_NO_THROW(cfg.check_unknown());
}

// ---------------------------------------------------------------------------

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"study"}).code, 1);

  const auto unknown = write_config("unknown.yaml", "gordon:\n  cutz: 3\n");
  RunResult r = run({"--config", unknown.string(), "--out-dir", (dir_ / "o").string(), "gordon"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("gordon.cutz"), std::string::npos);

  r = run({"--config", (dir_ / "absent.yaml").string(), "gordon"});
  EXPECT_EQ(r.code, 1);

  const auto bad_kind = write_config("kind.yaml", "field:\n  kind: hexagon\n");
  r = run({"--config", bad_kind.string(), "--out-dir", (dir_ / "o").string(), "tomography"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("field.kind"), std::string::npos);

  EXPECT_EQ(run({"--out-dir", (dir_ / "o").string(), "study", "astrology"}).code, 1);

  // A missing model file is a runtime failure, not a config error.
  const auto missing_model =
      write_config("model.yaml", "field:\n  kind: mlp\n  model: " + (dir_ / "nope.bin").string() + "\n");
  r = run({"--config", missing_model.string(), "--out-dir", (dir_ / "o").string(), "tomography"});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
}

constexpr const char* kSlabConfig = R"(field:
  kind: slab
  ambient_dim: 64
  manifold_dim: 48
target:
  kind: one_hot
  classes: 0
sweep:
  repeats: 6
)";

TEST_F(CliTest, TomographyOnSlabRecoversCodimension) {
  const auto cfg = write_config("slab.yaml", kSlabConfig);
  const RunResult r = run({"--config", cfg.string(), "--out-dir", (dir_ / "o").string(), "tomography"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"sweep.csv", "fit_report.json", "dstar.csv", "provenance.json"})
    EXPECT_TRUE(fs::exists(dir_ / "o" / f)) << f;

  const auto report = read_json(dir_ / "o" / "fit_report.json");
  EXPECT_EQ(report["curve"], "probability");
  double d50 = NAN;
  for (const auto& row : report["d_star"])
    if (row["threshold"] == 0.5) d50 = row["d_star"].get<double>();
  EXPECT_GE(d50, 12.0);
  EXPECT_LE(d50, 20.0);

  // Every output carries the config hash and seed.
  const std::string hash = report["config_hash"];
  for (const char* f : {"sweep.csv", "dstar.csv"}) {
    const std::string text = slurp(dir_ / "o" / f);
    EXPECT_EQ(text.rfind("# subtomo tomography config_hash=" + hash + " seed=0\n", 0), 0u) << f;
  }
  EXPECT_EQ(read_json(dir_ / "o" / "provenance.json")["config_hash"], hash);
  EXPECT_EQ(csv_rows(dir_ / "o" / "sweep.csv").size(), 12u * 6u);
}

TEST_F(CliTest, OutputsIndependentOfThreadsAndOutDir) {
  const auto cfg = write_config("slab.yaml", kSlabConfig);
  ASSERT_EQ(run({"--config", cfg.string(), "--threads", "1", "--out-dir", (dir_ / "a").string(), "tomography"}).code, 0);
  ASSERT_EQ(run({"--config", cfg.string(), "--threads", "4", "--out-dir", (dir_ / "b").string(), "tomography"}).code, 0);
  for (const auto& entry : fs::directory_iterator(dir_ / "a")) {
    const auto name = entry.path().filename();
    EXPECT_EQ(slurp(entry.path()), slurp(dir_ / "b" / name)) << name;
  }
}

TEST_F(CliTest, SeedFlagChangesHashAndResults) {
  const auto cfg = write_config("slab.yaml", kSlabConfig);
  ASSERT_EQ(run({"--config", cfg.string(), "--seed", "1", "--out-dir", (dir_ / "a").string(), "tomography"}).code, 0);
  ASSERT_EQ(run({"--config", cfg.string(), "--seed", "2", "--out-dir", (dir_ / "b").string(), "tomography"}).code, 0);
  const auto a = read_json(dir_ / "a" / "fit_report.json");
  const auto b = read_json(dir_ / "b" / "fit_report.json");
  EXPECT_NE(a["config_hash"], b["config_hash"]);
  EXPECT_EQ(a["master_seed"], 1);
  EXPECT_NE(slurp(dir_ / "a" / "sweep.csv").substr(60), slurp(dir_ / "b" / "sweep.csv").substr(60));
}

TEST_F(CliTest, AffineDistanceColumns) {
  const auto cfg = write_config("d.yaml",
                                "distance:\n  ambient_dims: [24]\n  fractions: [0.125, 0.25, 0.5, 0.75]\n"
                                "  pairs: 20\n");
  const RunResult r = run({"--config", cfg.string(), "--out-dir", (dir_ / "o").string(), "affine-distance"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(dir_ / "o" / "distance.csv");
  ASSERT_EQ(rows.size(), 10u);  // 4 sizes, unordered pairs with repetition
  for (const auto& row : rows) {
    const int D = std::stoi(row[0]), n = std::stoi(row[1]), d = std::stoi(row[2]);
    const double theory = std::stod(row[5]);
    EXPECT_NEAR(theory, n + d >= D ? 0.0 : std::sqrt(double(D - n - d) / D), 1e-12);
    if (n + d >= D) EXPECT_LE(std::stod(row[3]), 1e-4);
  }
  EXPECT_TRUE(fs::exists(dir_ / "o" / "distance_report.json"));
}

TEST_F(CliTest, GordonTableHolds) {
  const auto cfg = write_config("g.yaml",
                                "gordon:\n  ambient_dim: 64\n  cap_angles: [0.1, 0.4]\n"
                                "  codims: [20, 40, 60]\n  cuts: 100\n");
  const RunResult r = run({"--config", cfg.string(), "--out-dir", (dir_ / "o").string(), "gordon"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("codim"), std::string::npos);
  const auto rows = csv_rows(dir_ / "o" / "gordon.csv");
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& row : rows) {
    EXPECT_NEAR(std::stod(row[4]), cap_gaussian_width(64, std::stod(row[3])), 1e-12);
    EXPECT_EQ(row[8], "true");
  }
}

TEST_F(CliTest, DatasetDimOnPlantedManifolds) {
  const auto cfg = write_config("m.yaml",
                                "dataset:\n  kind: planted\n  ambient_dim: 24\n  classes: 3\n"
                                "  intrinsic_dims: [2, 4, 6]\n  thickness: 0\n  per_class: 120\n"
                                "metrics:\n  directions: 200\n  center_draws: 2\n");
  const RunResult r = run({"--config", cfg.string(), "--out-dir", (dir_ / "o").string(), "dataset-dim"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = slurp(dir_ / "o" / "metrics.csv");
  EXPECT_NE(text.find("\nclass,pca90,participation,d_effective_mean,d_effective_spread\n"), std::string::npos);
  const auto rows = csv_rows(dir_ / "o" / "metrics.csv");
  ASSERT_EQ(rows.size(), 3u);
  const int planted[] = {2, 4, 6};
  for (int c = 0; c < 3; ++c) {
    EXPECT_LE(std::stoi(rows[c][1]), planted[c]);
    EXPECT_GE(std::stoi(rows[c][1]), planted[c] - 1);
  }
}

TEST_F(CliTest, TrainThenProbeTrainedModel) {
  const auto train_cfg = write_config("t.yaml",
                                      "dataset:\n  kind: blobs\n  ambient_dim: 8\n  classes: 3\n  per_class: 60\n"
                                      "model:\n  hidden: [16]\ntrain:\n  epochs: 15\n  learning_rate: 0.01\n");
  RunResult r = run({"--config", train_cfg.string(), "--out-dir", (dir_ / "t").string(), "train"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto metrics = csv_rows(dir_ / "t" / "train_metrics.csv");
  ASSERT_EQ(metrics.size(), 15u);
  EXPECT_GT(std::stod(metrics.back()[3]), 0.9);

  // Same dataset block and seed regenerate the training data for offsets.
  const auto probe_cfg = write_config(
      "p.yaml", "dataset:\n  kind: blobs\n  ambient_dim: 8\n  classes: 3\n  per_class: 60\n"
                "field:\n  kind: mlp\n  model: " + (dir_ / "t" / "model.bin").string() +
                "\ntarget:\n  kind: boundary\n  classes: [0, 1]\nsweep:\n  dims: [1, 2, 3, 4, 6, 8]\n  repeats: 3\n"
                "probe:\n  max_steps: 200\n");
  r = run({"--config", probe_cfg.string(), "--out-dir", (dir_ / "p").string(), "tomography"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = read_json(dir_ / "p" / "fit_report.json");
  EXPECT_EQ(report["curve"], "loss");
  EXPECT_EQ(report["target"], "boundary(0 1)");
  const auto sweep = csv_rows(dir_ / "p" / "sweep.csv");
  ASSERT_EQ(sweep.size(), 18u);
  for (const auto& row : sweep) {
    EXPECT_TRUE(row[2].empty());  // no target component for a boundary target
    EXPECT_NE(row[6], "-1");      // offsets drawn from class-2 rows
  }

  // A uniform target has no rows outside its support; offsets fall back to
  // Gaussian draws and the loss curve is still fitted.
  const auto uniform_cfg = write_config(
      "u.yaml", "field:\n  kind: mlp\n  model: " + (dir_ / "t" / "model.bin").string() +
                "\ntarget:\n  kind: uniform\nsweep:\n  dims: [1, 2, 3, 4, 6, 8]\n  repeats: 3\n"
                "probe:\n  max_steps: 200\n");
  r = run({"--config", uniform_cfg.string(), "--out-dir", (dir_ / "u").string(), "tomography"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto uniform = read_json(dir_ / "u" / "fit_report.json");
  EXPECT_EQ(uniform["curve"], "loss");
  EXPECT_EQ(uniform["target"], "uniform_all");
  EXPECT_TRUE(uniform.contains("params") || uniform["fit_status"] != "ok");
}

TEST_F(CliTest, StudyWritesTablesAndTrend) {
  const auto cfg = write_config("s.yaml",
                                "dataset:\n  kind: blobs\n  ambient_dim: 8\n  classes: 2\n  per_class: 40\n"
                                "model:\n  hidden: [8]\ntrain:\n  epochs: 5\n"
                                "sweep:\n  dims: [1, 2, 3, 4, 5, 6, 8]\n  repeats: 2\n"
                                "probe:\n  max_steps: 50\nstudy:\n  grid: [4, 8, 16]\n");
  const RunResult r = run({"--config", cfg.string(), "--out-dir", (dir_ / "o").string(), "study", "width"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(dir_ / "o" / "study.csv");
  ASSERT_EQ(rows.size(), 6u);  // 3 grid values x 2 class targets
  const auto trend = read_json(dir_ / "o" / "trend.json");
  EXPECT_EQ(trend["kind"], "width");
  EXPECT_EQ(trend["expected_direction"], "decreasing");
  EXPECT_TRUE(trend.contains("inversions"));
  EXPECT_TRUE(trend.contains("trend_holds"));
  EXPECT_EQ(trend["grid"].size(), 3u);
}

TEST_F(CliTest, StudyRecordsPerPointFailures) {
  // 200 per class cannot be drawn from a 40-per-class split; the point is
  // recorded as an error and the study still completes.
  const auto cfg = write_config("s.yaml",
                                "dataset:\n  kind: blobs\n  ambient_dim: 6\n  classes: 2\n  per_class: 50\n"
                                "model:\n  hidden: [8]\ntrain:\n  epochs: 3\n"
                                "sweep:\n  dims: [1, 2, 3, 4, 5, 6]\n  repeats: 2\n"
                                "probe:\n  max_steps: 30\nstudy:\n  grid: [10, 200]\n");
  const RunResult r = run({"--config", cfg.string(), "--out-dir", (dir_ / "o").string(), "study", "trainset_size"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(dir_ / "o" / "study.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[2][3], "error");
  EXPECT_EQ(rows[3][3], "error");
  const auto trend = read_json(dir_ / "o" / "trend.json");
  EXPECT_TRUE(trend["grid"][1].contains("error"));
  EXPECT_FALSE(trend["trend_holds"].get<bool>());
}

}  // namespace
}  // namespace subtomo::cli

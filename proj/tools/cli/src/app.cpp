#include "subtomo_cli/app.hpp"

#include <CLI11.hpp>
#include <optional>
#include <string>

#include "subtomo/error.hpp"
#include "subtomo_cli/commands.hpp"
#include "subtomo_cli/config.hpp"

namespace subtomo::cli {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Subspace tomography of classifier confidence regions"};
  app.name("subtomo");
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out_dir;
  app.add_option("--config", config_path, "YAML config file");
  app.add_option("--seed", seed, "Master seed (overrides the `seed` key)");
  app.add_option("--threads", threads, "Worker threads; outputs do not depend on it")
      ->check(CLI::PositiveNumber);
  app.add_option("--out-dir", out_dir, "Output directory (overrides the `out_dir` key)");

  app.add_subcommand("tomography", "Dimension sweep of probes, curve fit and d* table");
  app.add_subcommand("affine-distance", "Closest approach of random affine subspaces vs theory");
  app.add_subcommand("train", "Train an MLP classifier");
  app.add_subcommand("dataset-dim", "Per-class PCA, participation ratio and effective dimension");
  app.add_subcommand("gordon", "Escape bound against cap miss frequencies (prints a table)");
  auto* study = app.add_subcommand("study", "Trend study over a grid of training setups");
  std::string kind;
  study->add_option("kind", kind,
                    "random_labels | trainset_size | ensemble | width | sparsity | training_stage")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    ConfigReader cfg = config_path.empty() ? ConfigReader() : ConfigReader::from_file(config_path);
    if (seed) cfg.set_override("seed", std::to_string(*seed));
    RunContext ctx{cfg, cfg.get_u64("seed", 0), 1, {}, out, err};
    const std::string threads_key = cfg.get_unhashed_string("threads", "1");
    if (threads) {
      ctx.threads = *threads;
    } else {
      try {
        ctx.threads = std::stoi(threads_key);
      } catch (const std::exception&) {
        throw ConfigError("config key 'threads': expected an integer, got '" + threads_key + "'");
      }
      if (ctx.threads < 1) throw ConfigError("config key 'threads': must be >= 1");
    }
    const std::string dir_key = cfg.get_unhashed_string("out_dir", "subtomo_out");
    ctx.out_dir = out_dir.empty() ? dir_key : out_dir;

    if (command == "tomography") run_tomography(ctx);
    else if (command == "affine-distance") run_affine_distance(ctx);
    else if (command == "train") run_train(ctx);
    else if (command == "dataset-dim") run_dataset_dim(ctx);
    else if (command == "gordon") run_gordon(ctx);
    else run_study(ctx, kind);
  } catch (const ConfigError& e) {
    err << "subtomo " << command << ": config error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "subtomo " << command << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "subtomo " << command << ": unexpected failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace subtomo::cli

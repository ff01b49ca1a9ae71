#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>

#include "subtomo_cli/config.hpp"

namespace subtomo::cli {

struct RunContext {
  ConfigReader& cfg;
  std::uint64_t seed = 0;  // master seed
  int threads = 1;
  std::filesystem::path out_dir;
  std::ostream& out;  // tables meant for the terminal
  std::ostream& log;  // progress
};

// Each command reads its whole config first, rejects unknown keys, then
// runs and writes its files (all tagged with the config hash) to out_dir.
void run_tomography(RunContext& ctx);
void run_affine_distance(RunContext& ctx);
void run_train(RunContext& ctx);
void run_dataset_dim(RunContext& ctx);
void run_gordon(RunContext& ctx);

// kind: random_labels | trainset_size | ensemble | width | sparsity | training_stage
void run_study(RunContext& ctx, const std::string& kind);

}  // namespace subtomo::cli

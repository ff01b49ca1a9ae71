#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "subtomo/datasets.hpp"
#include "subtomo/fields.hpp"
#include "subtomo/fitting.hpp"
#include "subtomo/neuralnet.hpp"
#include "subtomo/tomography.hpp"
#include "subtomo_cli/config.hpp"

namespace subtomo::cli {

// Seed streams split from the master seed with derive_seed.
enum SeedStream : std::uint64_t {
  kFieldStream = 1,
  kDatasetStream = 2,
  kSweepStream = 3,
  kTrainStream = 4,
  kInitStream = 5,
  kMetricsStream = 6,
  kGeometryStream = 7,
  kBandStream = 8,
};

struct DataBundle {
  Dataset train;
  Dataset test;  // empty when test_fraction is 0
};

// Reads a dataset block: generator (blobs | planted | csv), a stratified
// train/test split, then train-only transforms (subsample, permute_labels,
// augment).
DataBundle build_data(ConfigReader& cfg, const std::string& prefix, std::uint64_t seed,
                      double default_test_fraction = 0.2);

std::unique_ptr<ConfidenceField> build_field(ConfigReader& cfg, const std::string& prefix,
                                             std::uint64_t seed);
TargetVector build_target(ConfigReader& cfg, const std::string& prefix, int class_count);
ProbeConfig build_probe(ConfigReader& cfg, const std::string& prefix);
OffsetPolicy build_offsets(ConfigReader& cfg, const std::string& prefix, const Dataset* data);
SweepConfig build_sweep(ConfigReader& cfg, const std::string& prefix, int ambient_dim,
                        std::uint64_t master_seed, int threads);
TrainConfig build_train(ConfigReader& cfg, const std::string& prefix, std::uint64_t seed);
std::vector<int> build_layers(ConfigReader& cfg, const std::string& prefix, int ambient_dim,
                              int class_count);

std::vector<int> default_dims(int ambient_dim);
std::vector<double> default_thresholds();

// Fit of a sweep plus the d* table at each threshold. When no crossing can
// be extracted the row is classified against the per-d medians:
// "below_range" (already reached at the smallest d), "above_range" (never
// reached at the largest d) or "no_fit".
struct DstarRow {
  double threshold = 0.5;
  std::string status;  // ok | below_range | above_range | no_fit
  std::optional<CriticalDim> critical;
  double effective = 0.0;  // d* clamped to the swept range, with censored rows at the ends
};

struct SweepAnalysis {
  bool probability = true;
  std::optional<FitResult> fit;
  std::string fit_status;
  std::vector<DstarRow> table;
  std::vector<double> medians;  // per-d median of target component or exp(-L_min)
};

SweepAnalysis analyze_sweep(const SweepResult& sweep, int ambient_dim,
                            const std::vector<double>& thresholds, std::uint64_t band_seed);
nlohmann::ordered_json analysis_json(const SweepAnalysis& analysis);
std::string dstar_csv_rows(const SweepAnalysis& analysis, const std::string& prefix_columns);

}  // namespace subtomo::cli

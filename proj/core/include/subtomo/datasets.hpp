#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "subtomo/random.hpp"

namespace subtomo {

enum class Split { train, test };

// N labelled points in R^D, stored row-wise.
struct Dataset {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;
  int class_count = 0;
  Split split = Split::train;

  int size() const { return static_cast<int>(inputs.rows()); }
  int dim() const { return static_cast<int>(inputs.cols()); }
  std::vector<int> class_counts() const;
  Dataset select(std::span<const int> rows) const;
  // Rows whose label is `cls`.
  Dataset class_subset(int cls) const;
};

// Throws InvalidArgument / NonFiniteInput on broken invariants.
void validate(const Dataset& data);

// C isotropic Gaussian clusters of per_class_n points each. Centers are
// redrawn until every pair is at least separation * noise_sigma apart.
// `center_support` > 0 restricts centers to the first center_support
// coordinates (class information aligned with input axes).
Dataset gen_blobs(int ambient_dim, int class_count, int per_class_n, double separation,
                  double noise_sigma, Rng& rng, int center_support = 0);

// Class c lies on a random intrinsic_dims[c]-dimensional affine subspace
// (unit variance along each long direction, offset ~ N(0, 9 I)) plus
// isotropic noise of scale `thickness`.
Dataset gen_planted_manifold_classes(int ambient_dim, int class_count,
                                     const std::vector<int>& intrinsic_dims, double thickness,
                                     int per_class_n, Rng& rng);

// Uniform random permutation of the labels; inputs untouched.
Dataset permute_labels(const Dataset& data, Rng& rng);

// n rows without replacement, stratified by class: class c receives its
// largest-remainder share of n, so counts differ from proportional by < 1.
Dataset subsample(const Dataset& data, int n, Rng& rng);

// Appends `copies` Gaussian-jittered copies of every row, keeping labels.
Dataset augment(const Dataset& data, double noise_sigma, int copies, Rng& rng);

// Header `label,x0,...,x{D-1}`; one row per point. Floats are written in
// shortest round-trip form.
std::string to_csv(const Dataset& data);
Dataset parse_csv(std::string_view text);
void save_csv(const Dataset& data, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);

// Indices of rows whose labels are not in `excluded_classes`.
std::vector<int> offset_pool(const Dataset& data, std::span<const int> excluded_classes);

}  // namespace subtomo

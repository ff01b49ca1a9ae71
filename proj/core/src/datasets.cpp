#include "subtomo/datasets.hpp"
#include "subtomo/format.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "subtomo/error.hpp"
#include "subtomo/geometry.hpp"

namespace subtomo {

std::vector<int> Dataset::class_counts() const {
  std::vector<int> counts(std::max(class_count, 0), 0);
  for (int y : labels)
    if (y >= 0 && y < class_count) ++counts[y];
  return counts;
}

Dataset Dataset::select(std::span<const int> rows) const {
  Dataset out;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(rows[i]);
    out.labels.push_back(labels[rows[i]]);
  }
  out.class_count = class_count;
  out.split = split;
  return out;
}

Dataset Dataset::class_subset(int cls) const {
  std::vector<int> rows;
  for (int i = 0; i < size(); ++i)
    if (labels[i] == cls) rows.push_back(i);
  return select(rows);
}

void validate(const Dataset& data) {
  if (data.size() < 1) throw InvalidArgument("dataset is empty");
  if (static_cast<std::size_t>(data.size()) != data.labels.size())
    throw InvalidArgument("dataset has " + std::to_string(data.size()) + " rows but " +
                          std::to_string(data.labels.size()) + " labels");
  for (int y : data.labels)
    if (y < 0 || y >= data.class_count)
      throw InvalidArgument("label " + std::to_string(y) + " outside [0, " +
                            std::to_string(data.class_count) + ")");
  if (!data.inputs.allFinite()) throw NonFiniteInput("dataset inputs contain NaN or Inf");
}

Dataset gen_blobs(int ambient_dim, int class_count, int per_class_n, double separation,
                  double noise_sigma, Rng& rng, int center_support) {
  if (ambient_dim < 1 || class_count < 1 || per_class_n < 1)
    throw InvalidArgument("blob dimensions and counts must be positive");
  if (!(separation > 0.0) || !(noise_sigma > 0.0))
    throw InvalidArgument("separation and noise_sigma must be positive");
  const int support = center_support > 0 ? std::min(center_support, ambient_dim) : ambient_dim;
  const double min_dist = separation * noise_sigma;
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::MatrixXd centers;
  bool placed = false;
  for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
    centers = Eigen::MatrixXd::Zero(class_count, ambient_dim);
    for (int c = 0; c < class_count; ++c)
      for (int j = 0; j < support; ++j) centers(c, j) = min_dist * normal(rng);
    placed = true;
    for (int a = 0; a < class_count && placed; ++a)
      for (int b = a + 1; b < class_count && placed; ++b)
        placed = (centers.row(a) - centers.row(b)).norm() >= min_dist;
  }
  if (!placed) throw InfeasiblePacking("could not place blob centers far enough apart");

  Dataset out;
  out.class_count = class_count;
  out.inputs.resize(static_cast<Eigen::Index>(class_count) * per_class_n, ambient_dim);
  out.labels.reserve(out.inputs.rows());
  Eigen::Index row = 0;
  for (int c = 0; c < class_count; ++c) {
    for (int i = 0; i < per_class_n; ++i, ++row) {
      for (int j = 0; j < ambient_dim; ++j) out.inputs(row, j) = centers(c, j) + noise_sigma * normal(rng);
      out.labels.push_back(c);
    }
  }
  return out;
}

Dataset gen_planted_manifold_classes(int ambient_dim, int class_count,
                                     const std::vector<int>& intrinsic_dims, double thickness,
                                     int per_class_n, Rng& rng) {
  if (class_count < 1 || per_class_n < 1) throw InvalidArgument("counts must be positive");
  if (static_cast<int>(intrinsic_dims.size()) != class_count)
    throw InvalidDimension("need one intrinsic dimension per class");
  if (thickness < 0.0) throw InvalidArgument("thickness must be non-negative");
  for (int n : intrinsic_dims)
    if (n < 1 || n > ambient_dim)
      throw InvalidDimension("intrinsic dimension " + std::to_string(n) + " outside [1, " +
                             std::to_string(ambient_dim) + "]");
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset out;
  out.class_count = class_count;
  out.inputs.resize(static_cast<Eigen::Index>(class_count) * per_class_n, ambient_dim);
  Eigen::Index row = 0;
  for (int c = 0; c < class_count; ++c) {
    AffineCut plane = sample_cut(ambient_dim, intrinsic_dims[c], ambient_dim, rng);
    plane.offset = 3.0 * standard_normal_vector(ambient_dim, rng);
    for (int i = 0; i < per_class_n; ++i, ++row) {
      Eigen::VectorXd x = embed(plane, standard_normal_vector(intrinsic_dims[c], rng));
      if (thickness > 0.0) x += thickness * standard_normal_vector(ambient_dim, rng);
      out.inputs.row(row) = x.transpose();
      out.labels.push_back(c);
    }
  }
  return out;
}

Dataset permute_labels(const Dataset& data, Rng& rng) {
  Dataset out = data;
  std::shuffle(out.labels.begin(), out.labels.end(), rng);
  return out;
}

Dataset subsample(const Dataset& data, int n, Rng& rng) {
  if (n < 0 || n > data.size())
    throw InvalidArgument("cannot subsample " + std::to_string(n) + " rows from " +
                          std::to_string(data.size()));
  const auto counts = data.class_counts();
  const int total = data.size();
  // Largest-remainder apportionment of n across classes.
  std::vector<int> quota(counts.size());
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const double exact = static_cast<double>(n) * counts[c] / total;
    quota[c] = static_cast<int>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(exact - quota[c], static_cast<int>(c));
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int i = 0; assigned < n; ++i, ++assigned) ++quota[remainders[i].second];

  std::vector<int> rows;
  rows.reserve(n);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    std::vector<int> members;
    for (int i = 0; i < total; ++i)
      if (data.labels[i] == static_cast<int>(c)) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    rows.insert(rows.end(), members.begin(), members.begin() + quota[c]);
  }
  std::sort(rows.begin(), rows.end());
  return data.select(rows);
}

Dataset augment(const Dataset& data, double noise_sigma, int copies, Rng& rng) {
  if (copies < 1) throw InvalidArgument("augment needs at least one copy");
  if (noise_sigma < 0.0) throw InvalidArgument("noise_sigma must be non-negative");
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset out;
  out.class_count = data.class_count;
  out.split = data.split;
  const Eigen::Index n = data.inputs.rows();
  out.inputs.resize(n * (copies + 1), data.inputs.cols());
  out.inputs.topRows(n) = data.inputs;
  out.labels = data.labels;
  for (int k = 1; k <= copies; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < data.inputs.cols(); ++j)
        out.inputs(k * n + i, j) = data.inputs(i, j) + (noise_sigma > 0.0 ? noise_sigma * normal(rng) : 0.0);
      out.labels.push_back(data.labels[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string to_csv(const Dataset& data) {
  std::string out = "label";
  for (int j = 0; j < data.dim(); ++j) out += ",x" + std::to_string(j);
  out += '\n';
  for (int i = 0; i < data.size(); ++i) {
    out += std::to_string(data.labels[i]);
    for (int j = 0; j < data.dim(); ++j) {
      out += ',';
      out += format_double(data.inputs(i, j));
    }
    out += '\n';
  }
  return out;
}

Dataset parse_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("empty file; expected header label,x0,...,x{D-1}", 1, 1);

  auto split = [](std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t s = 0;
    while (true) {
      const std::size_t comma = line.find(',', s);
      fields.push_back(line.substr(s, comma == std::string_view::npos ? std::string_view::npos : comma - s));
      if (comma == std::string_view::npos) break;
      s = comma + 1;
    }
    return fields;
  };

  const auto header = split(lines[0]);
  if (header.size() < 2 || header[0] != "label")
    throw ParseError("missing header; expected label,x0,...,x{D-1}", 1, 1);
  for (std::size_t j = 1; j < header.size(); ++j)
    if (header[j] != "x" + std::to_string(j - 1))
      throw ParseError("header column should be x" + std::to_string(j - 1), 1, j + 1);
  const std::size_t dim = header.size() - 1;
  const std::size_t rows = lines.size() - 1;
  if (rows == 0) throw ParseError("no data rows", 2, 1);

  Dataset out;
  out.inputs.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  out.labels.resize(rows);
  int max_label = -1;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t file_row = i + 2;
    const auto fields = split(lines[i + 1]);
    if (fields.size() != dim + 1)
      throw ParseError("expected " + std::to_string(dim + 1) + " fields, found " +
                           std::to_string(fields.size()),
                       file_row, std::min(fields.size(), dim + 1));
    int label = 0;
    const auto lr = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), label);
    if (lr.ec != std::errc() || lr.ptr != fields[0].data() + fields[0].size() || label < 0)
      throw ParseError("label is not a non-negative integer", file_row, 1);
    out.labels[i] = label;
    max_label = std::max(max_label, label);
    for (std::size_t j = 0; j < dim; ++j) {
      const auto f = fields[j + 1];
      double v = 0.0;
      const auto r = std::from_chars(f.data(), f.data() + f.size(), v);
      if (r.ec != std::errc() || r.ptr != f.data() + f.size())
        throw ParseError("not a number", file_row, j + 2);
      if (!std::isfinite(v)) throw ParseError("non-finite value", file_row, j + 2);
      out.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  out.class_count = std::max(max_label + 1, 1);
  return out;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << to_csv(data);
  if (!out) throw Error("failed writing " + path.string());
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

std::vector<int> offset_pool(const Dataset& data, std::span<const int> excluded_classes) {
  std::vector<int> pool;
  for (int i = 0; i < data.size(); ++i)
    if (std::find(excluded_classes.begin(), excluded_classes.end(), data.labels[i]) ==
        excluded_classes.end())
      pool.push_back(i);
  return pool;
}

}  // namespace subtomo

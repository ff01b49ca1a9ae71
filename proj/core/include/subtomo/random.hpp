#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace subtomo {

using Rng = std::mt19937_64;

// Seed splitting for parallel work. A task identified by (stream, index)
// under a master seed always gets the same generator, independent of the
// order in which tasks are scheduled:
//   seed = splitmix64(splitmix64(master ^ splitmix64(stream)) + index)
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);

Eigen::VectorXd standard_normal_vector(Eigen::Index n, Rng& rng);
Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace subtomo

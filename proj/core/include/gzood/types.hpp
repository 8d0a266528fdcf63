#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace gzood {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Random source threaded explicitly through every stochastic operation.
using Rng = std::mt19937_64;

}  // namespace gzood

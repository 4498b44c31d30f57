#pragma once

#include <Eigen/Dense>

#include <random>

namespace otbayes {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// All stochastic routines take an explicit engine so callers control streams.
using Rng = std::mt19937_64;

}  // namespace otbayes

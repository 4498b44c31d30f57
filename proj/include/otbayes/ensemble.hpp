#pragma once

#include "otbayes/types.hpp"

#include <optional>

namespace otbayes {

/// A particle approximation of a probability measure. Particles are stored one
/// per row (N x n). Weights are optional; absent weights mean uniform.
class Ensemble {
 public:
  explicit Ensemble(Matrix particles);
  Ensemble(Matrix particles, Vector weights);

  Eigen::Index size() const { return particles_.rows(); }
  Eigen::Index dim() const { return particles_.cols(); }

  const Matrix& particles() const { return particles_; }
  Matrix& particles() { return particles_; }
  auto particle(Eigen::Index i) const { return particles_.row(i); }

  bool has_weights() const { return weights_.has_value(); }
  /// Normalized weights; uniform 1/N when the ensemble is unweighted.
  Vector weights() const;

  /// Weighted mean of the particles.
  Vector mean() const;
  /// Sample covariance. Unweighted ensembles use the 1/(N-1) normalization.
  Matrix covariance() const;

 private:
  Matrix particles_;
  std::optional<Vector> weights_;
};

/// Column mean of a row-per-sample matrix.
Vector column_mean(const Matrix& samples);
/// Cross covariance with 1/(N-1) normalization between row-per-sample matrices.
Matrix cross_covariance(const Matrix& a, const Matrix& b);

}  // namespace otbayes

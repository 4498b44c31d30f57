#include "otbayes/ensemble.hpp"

#include <cmath>
#include <stdexcept>

namespace otbayes {

namespace {

void check_particles(const Matrix& p) {
  if (p.rows() < 2) throw std::invalid_argument("ensemble needs at least 2 particles");
  if (p.cols() < 1) throw std::invalid_argument("ensemble particles need dimension >= 1");
}

}  // namespace

Ensemble::Ensemble(Matrix particles) : particles_(std::move(particles)) {
  check_particles(particles_);
}

Ensemble::Ensemble(Matrix particles, Vector weights)
    : particles_(std::move(particles)), weights_(std::move(weights)) {
  check_particles(particles_);
  if (weights_->size() != particles_.rows()) {
    throw std::invalid_argument("ensemble weights length must equal particle count");
  }
  if ((weights_->array() < 0.0).any() || !weights_->allFinite()) {
    throw std::invalid_argument("ensemble weights must be finite and nonnegative");
  }
  if (std::abs(weights_->sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("ensemble weights must sum to 1");
  }
}

Vector Ensemble::weights() const {
  if (weights_) return *weights_;
  return Vector::Constant(size(), 1.0 / static_cast<double>(size()));
}

Vector Ensemble::mean() const {
  if (weights_) return particles_.transpose() * (*weights_);
  return column_mean(particles_);
}

Matrix Ensemble::covariance() const {
  if (!weights_) return cross_covariance(particles_, particles_);
  const Vector m = mean();
  const Matrix centered = particles_.rowwise() - m.transpose();
  return centered.transpose() * weights_->asDiagonal() * centered;
}

Vector column_mean(const Matrix& samples) {
  return samples.colwise().sum().transpose() / static_cast<double>(samples.rows());
}

Matrix cross_covariance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("cross_covariance: row count mismatch");
  if (a.rows() < 2) throw std::invalid_argument("cross_covariance: need at least 2 samples");
  const Matrix ca = a.rowwise() - column_mean(a).transpose();
  const Matrix cb = b.rowwise() - column_mean(b).transpose();
  return ca.transpose() * cb / static_cast<double>(a.rows() - 1);
}

}  // namespace otbayes

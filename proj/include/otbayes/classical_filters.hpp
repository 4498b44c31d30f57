#pragma once

#include "otbayes/ensemble.hpp"
#include "otbayes/models.hpp"
#include "otbayes/types.hpp"

#include <vector>

namespace otbayes {

/// Gaussian belief N(mean, cov), the state of the exact linear filter.
struct GaussianBelief {
  Vector mean;
  Matrix cov;

  /// Throws unless cov is symmetric (1e-12) with eigenvalues >= -1e-10.
  void validate() const;
};

/// K = S H^T (H S H^T + R)^{-1}, computed with a symmetric solve.
/// Throws std::domain_error if the innovation covariance is singular.
Matrix kalman_gain(const Matrix& Sigma, const Matrix& H, const Matrix& R);

GaussianBelief kalman_update(const GaussianBelief& belief, const Matrix& H, const Matrix& R, const Vector& y);
GaussianBelief kalman_predict(const GaussianBelief& belief, const Matrix& A, const Matrix& Q);

/// Stochastic EnKF: simulates Y^i ~ h(.|X^i) and moves X^i by K (y - Y^i) with
/// the empirical gain K = Cov(X,Y) Cov(Y)^{-1}.
Ensemble enkf_update(const Ensemble& ens, const Vector& y, const StateSpaceModel& model, Rng& rng);

/// Normalized likelihood weights (prior weights of a weighted ensemble are folded in).
Vector importance_weights(const Ensemble& ens, const Vector& y, const StateSpaceModel& model);

enum class ResampleScheme { multinomial, systematic };

/// N ancestor indices drawn from the weights.
std::vector<Eigen::Index> multinomial_resample(const Vector& weights, Rng& rng,
                                               ResampleScheme scheme = ResampleScheme::multinomial);

struct SirResult {
  Ensemble ensemble;
  /// Effective sample size of the importance weights before resampling.
  double ess = 0.0;
};

SirResult sir_update_detailed(const Ensemble& ens, const Vector& y, const StateSpaceModel& model, Rng& rng,
                              ResampleScheme scheme = ResampleScheme::multinomial);
Ensemble sir_update(const Ensemble& ens, const Vector& y, const StateSpaceModel& model, Rng& rng,
                    ResampleScheme scheme = ResampleScheme::multinomial);

/// 1 / sum w_i^2 for normalized weights.
double effective_sample_size(const Vector& weights);

}  // namespace otbayes

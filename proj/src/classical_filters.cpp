#include "otbayes/classical_filters.hpp"

#include "otbayes/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace otbayes {

namespace {

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Solves S X = B for symmetric S; adds jitter 1e-10 trace/m once if the factorization is degenerate.
bool solve_symmetric(const Matrix& s, const Matrix& b, Matrix& out, bool allow_jitter) {
  auto usable = [](const Eigen::LDLT<Matrix>& f) {
    return f.info() == Eigen::Success && f.isPositive() && f.rcond() > 1e-14;
  };
  Eigen::LDLT<Matrix> ldlt(s);
  if (!usable(ldlt)) {
    if (!allow_jitter) return false;
    Matrix jittered = s;
    jittered.diagonal().array() += 1e-10 * std::max(s.trace() / static_cast<double>(s.rows()), 0.0);
    ldlt.compute(jittered);
    if (!usable(ldlt)) return false;
  }
  out = ldlt.solve(b);
  return out.allFinite();
}

}  // namespace

void GaussianBelief::validate() const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw std::invalid_argument("Gaussian belief: covariance must be n x n");
  }
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("Gaussian belief: covariance must be symmetric");
  }
  if (Eigen::SelfAdjointEigenSolver<Matrix>(cov).eigenvalues().minCoeff() < -1e-10) {
    throw std::invalid_argument("Gaussian belief: covariance must be positive semidefinite");
  }
}

Matrix kalman_gain(const Matrix& Sigma, const Matrix& H, const Matrix& R) {
  if (Sigma.rows() != Sigma.cols() || H.cols() != Sigma.rows() || R.rows() != H.rows() || R.cols() != H.rows()) {
    throw std::invalid_argument("kalman_gain: dimensions do not conform");
  }
  const Matrix s = symmetrize(H * Sigma * H.transpose() + R);
  Matrix kt;
  if (!solve_symmetric(s, H * Sigma.transpose(), kt, false)) {
    throw std::domain_error("kalman_gain: innovation covariance H S H^T + R is singular");
  }
  return kt.transpose();
}

GaussianBelief kalman_update(const GaussianBelief& belief, const Matrix& H, const Matrix& R, const Vector& y) {
  if (y.size() != H.rows()) throw std::invalid_argument("kalman_update: observation dimension mismatch");
  const Matrix k = kalman_gain(belief.cov, H, R);
  GaussianBelief out;
  out.mean = belief.mean + k * (y - H * belief.mean);
  out.cov = symmetrize(belief.cov - k * H * belief.cov);
  return out;
}

GaussianBelief kalman_predict(const GaussianBelief& belief, const Matrix& A, const Matrix& Q) {
  if (A.cols() != belief.mean.size() || Q.rows() != A.rows()) {
    throw std::invalid_argument("kalman_predict: dimensions do not conform");
  }
  return {A * belief.mean, symmetrize(A * belief.cov * A.transpose() + Q)};
}

Ensemble enkf_update(const Ensemble& ens, const Vector& y, const StateSpaceModel& model, Rng& rng) {
  if (ens.has_weights()) throw std::invalid_argument("enkf_update: ensemble must have uniform weights");
  if (ens.dim() != model.state_dim() || y.size() != model.obs_dim()) {
    throw std::invalid_argument("enkf_update: dimension mismatch");
  }
  const Eigen::Index n_particles = ens.size();
  Matrix ys(n_particles, model.obs_dim());
  for (Eigen::Index i = 0; i < n_particles; ++i) {
    ys.row(i) = model.sample_observation(ens.particle(i).transpose(), rng).transpose();
  }
  const Matrix cxy = cross_covariance(ens.particles(), ys);
  const Matrix cyy = symmetrize(cross_covariance(ys, ys));
  Matrix kt;
  if (!solve_symmetric(cyy, cxy.transpose(), kt, true)) {
    throw std::domain_error(
        "enkf_update: empirical observation covariance is singular; add observation noise or more particles");
  }
  Matrix innovations = (-ys).rowwise() + y.transpose();
  return Ensemble(ens.particles() + innovations * kt);
}

Vector importance_weights(const Ensemble& ens, const Vector& y, const StateSpaceModel& model) {
  if (!model.has_likelihood()) throw std::logic_error("importance_weights: model has no analytic likelihood");
  const Eigen::Index n_particles = ens.size();
  Vector logw(n_particles);
  const Vector prior = ens.weights();
  for (Eigen::Index i = 0; i < n_particles; ++i) {
    logw(i) = model.log_likelihood(y, ens.particle(i).transpose()) + std::log(prior(i));
  }
  const double top = logw.maxCoeff();
  if (!std::isfinite(top)) throw std::domain_error("importance_weights: every likelihood is zero");
  Vector w = (logw.array() - top).exp().matrix();
  w /= w.sum();
  return w;
}

std::vector<Eigen::Index> multinomial_resample(const Vector& weights, Rng& rng, ResampleScheme scheme) {
  const Eigen::Index n = weights.size();
  if (n < 1) throw std::invalid_argument("resample: empty weight vector");
  std::vector<double> cdf(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += weights(i);
    cdf[static_cast<std::size_t>(i)] = acc;
  }
  auto locate = [&](double u) {
    const double target = u * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    auto idx = static_cast<Eigen::Index>(it - cdf.begin());
    idx = std::min(idx, n - 1);
    // Never select a zero-weight slot at a tie.
    while (weights(idx) <= 0.0 && idx > 0) --idx;
    return idx;
  };
  std::vector<Eigen::Index> out(static_cast<std::size_t>(n));
  if (scheme == ResampleScheme::systematic) {
    const double u0 = uniform01(rng);
    for (Eigen::Index i = 0; i < n; ++i) {
      out[static_cast<std::size_t>(i)] = locate((static_cast<double>(i) + u0) / static_cast<double>(n));
    }
  } else {
    for (auto& idx : out) idx = locate(uniform01(rng));
  }
  return out;
}

SirResult sir_update_detailed(const Ensemble& ens, const Vector& y, const StateSpaceModel& model, Rng& rng,
                              ResampleScheme scheme) {
  const Vector w = importance_weights(ens, y, model);
  const auto idx = multinomial_resample(w, rng, scheme);
  Matrix next(ens.size(), ens.dim());
  for (std::size_t i = 0; i < idx.size(); ++i) next.row(static_cast<Eigen::Index>(i)) = ens.particle(idx[i]);
  return {Ensemble(std::move(next)), effective_sample_size(w)};
}

Ensemble sir_update(const Ensemble& ens, const Vector& y, const StateSpaceModel& model, Rng& rng,
                    ResampleScheme scheme) {
  return sir_update_detailed(ens, y, model, rng, scheme).ensemble;
}

double effective_sample_size(const Vector& weights) {
  const double s = weights.sum();
  if (!(s > 0.0)) throw std::invalid_argument("effective_sample_size: weights must have positive mass");
  return s * s / weights.squaredNorm();
}

}  // namespace otbayes

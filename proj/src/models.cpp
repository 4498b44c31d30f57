#include "otbayes/models.hpp"

#include "otbayes/random.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace otbayes {

namespace {

constexpr double kSymTol = 1e-10;

void require_psd(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) throw std::invalid_argument(std::string(what) + " must be square");
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + " must be finite");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymTol * std::max(1.0, m.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument(std::string(what) + " must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.eigenvalues().minCoeff() < -kSymTol * std::max(1.0, m.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument(std::string(what) + " must be positive semidefinite");
  }
}

// Symmetric square root of a PSD matrix (negative rounding eigenvalues clamped).
Matrix psd_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  const Vector s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double StateSpaceModel::log_likelihood(const Vector&, const Vector&) const {
  throw std::logic_error(name() + ": likelihood is not available for this model");
}

double StateSpaceModel::likelihood(const Vector& y, const Vector& x) const {
  return std::exp(log_likelihood(y, x));
}

Vector StateSpaceModel::observation_mean(const Vector&) const {
  throw std::logic_error(name() + ": observation is not additive Gaussian");
}

Matrix StateSpaceModel::observation_noise_cov() const {
  throw std::logic_error(name() + ": observation is not additive Gaussian");
}

// ---------------------------------------------------------------- linear Gaussian

LinearGaussianModel::LinearGaussianModel(Matrix H, Matrix R, Matrix A, Matrix Q, Vector prior_mean,
                                         Matrix prior_cov)
    : H_(std::move(H)), R_(std::move(R)), A_(std::move(A)), Q_(std::move(Q)), m0_(std::move(prior_mean)),
      S0_(std::move(prior_cov)) {
  const Eigen::Index n = A_.rows();
  if (A_.cols() != n || H_.cols() != n || Q_.rows() != n || m0_.size() != n || S0_.rows() != n) {
    throw std::invalid_argument("linear Gaussian model: dimensions do not conform");
  }
  if (R_.rows() != H_.rows()) throw std::invalid_argument("linear Gaussian model: R must be m x m");
  require_psd(R_, "R");
  require_psd(Q_, "Q");
  require_psd(S0_, "prior covariance");
  sqrt_R_ = psd_sqrt(R_);
  sqrt_Q_ = psd_sqrt(Q_);
  sqrt_S0_ = psd_sqrt(S0_);
  r_llt_.compute(R_);
  r_spd_ = r_llt_.info() == Eigen::Success && Eigen::SelfAdjointEigenSolver<Matrix>(R_).eigenvalues().minCoeff() > 0.0;
}

LinearGaussianModel LinearGaussianModel::scalar(double prior_mean, double prior_var, double h, double r) {
  return LinearGaussianModel(Matrix::Constant(1, 1, h), Matrix::Constant(1, 1, r), Matrix::Identity(1, 1),
                             Matrix::Zero(1, 1), Vector::Constant(1, prior_mean),
                             Matrix::Constant(1, 1, prior_var));
}

Vector LinearGaussianModel::sample_prior(Rng& rng) const {
  return m0_ + sqrt_S0_ * standard_normal(rng, state_dim());
}

Vector LinearGaussianModel::sample_dynamics(const Vector& x, Rng& rng) const {
  return A_ * x + sqrt_Q_ * standard_normal(rng, state_dim());
}

Vector LinearGaussianModel::sample_observation(const Vector& x, Rng& rng) const {
  return H_ * x + sqrt_R_ * standard_normal(rng, obs_dim());
}

double LinearGaussianModel::log_likelihood(const Vector& y, const Vector& x) const {
  if (!r_spd_) throw std::logic_error("linear Gaussian model: likelihood needs R positive definite");
  const Vector r = y - H_ * x;
  return -0.5 * r.dot(r_llt_.solve(r));
}

// ---------------------------------------------------------------- squared observation

SquaredObservationModel::SquaredObservationModel(Form form, Eigen::Index n, double alpha, double lambda)
    : form_(form), n_(n), alpha_(alpha), lambda_(lambda) {
  if (n < 1) throw std::invalid_argument("squared model: n must be >= 1");
  if (!(lambda > 0.0)) throw std::invalid_argument("squared model: lambda must be > 0");
}

SquaredObservationModel SquaredObservationModel::static_form(Eigen::Index n, double lambda_w) {
  return SquaredObservationModel(Form::static_half, n, 0.0, lambda_w);
}

SquaredObservationModel SquaredObservationModel::dynamic_form(Eigen::Index n, double alpha, double lambda) {
  return SquaredObservationModel(Form::dynamic, n, alpha, lambda);
}

Vector SquaredObservationModel::sample_prior(Rng& rng) const { return standard_normal(rng, n_); }

Vector SquaredObservationModel::sample_dynamics(const Vector& x, Rng& rng) const {
  if (form_ == Form::static_half) return x;
  return (1.0 - alpha_) * x + 2.0 * lambda_ * standard_normal(rng, n_);
}

Vector SquaredObservationModel::observation_mean(const Vector& x) const {
  return obs_coefficient() * x.cwiseAbs2();
}

Vector SquaredObservationModel::sample_observation(const Vector& x, Rng& rng) const {
  return observation_mean(x) + lambda_ * standard_normal(rng, n_);
}

double SquaredObservationModel::log_likelihood(const Vector& y, const Vector& x) const {
  return -0.5 * (y - observation_mean(x)).squaredNorm() / (lambda_ * lambda_);
}

Matrix SquaredObservationModel::observation_noise_cov() const {
  return Matrix::Identity(n_, n_) * (lambda_ * lambda_);
}

// ---------------------------------------------------------------- Lorenz-63

Lorenz63Model::Lorenz63Model(Lorenz63Params params) : params_(std::move(params)) {
  if (!(params_.dt_integration > 0.0)) throw std::invalid_argument("Lorenz-63: dt_integration must be > 0");
  if (!(params_.obs_noise_std > 0.0)) throw std::invalid_argument("Lorenz-63: obs_noise_std must be > 0");
  if (params_.steps_per_observation < 1) throw std::invalid_argument("Lorenz-63: steps_per_observation must be >= 1");
  if (params_.process_noise_std < 0.0) throw std::invalid_argument("Lorenz-63: process_noise_std must be >= 0");
  if (params_.observed_components.empty()) throw std::invalid_argument("Lorenz-63: no observed components");
  for (int c : params_.observed_components) {
    if (c < 0 || c > 2) throw std::invalid_argument("Lorenz-63: observed component out of range");
  }
  if (params_.prior_mean.size() == 0) params_.prior_mean = Vector::Zero(3);
  if (params_.prior_mean.size() != 3) throw std::invalid_argument("Lorenz-63: prior mean must be a 3-vector");
}

Vector lorenz63_vector_field(const Lorenz63Params& p, const Vector& x) {
  Vector d(3);
  d << p.sigma * (x(1) - x(0)), x(0) * (p.rho - x(2)) - x(1), x(0) * x(1) - p.beta * x(2);
  return d;
}

Vector lorenz63_step(const Lorenz63Params& p, const Vector& x) {
  if (x.size() != 3) throw std::invalid_argument("Lorenz-63: state must be a 3-vector");
  const double h = p.dt_integration;
  const Vector k1 = lorenz63_vector_field(p, x);
  const Vector k2 = lorenz63_vector_field(p, x + 0.5 * h * k1);
  const Vector k3 = lorenz63_vector_field(p, x + 0.5 * h * k2);
  const Vector k4 = lorenz63_vector_field(p, x + h * k3);
  Vector next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw std::runtime_error("Lorenz-63: integration produced a non-finite state");
  return next;
}

Vector Lorenz63Model::flow(const Vector& x) const {
  Vector s = x;
  for (int k = 0; k < params_.steps_per_observation; ++k) s = lorenz63_step(params_, s);
  return s;
}

Vector Lorenz63Model::sample_prior(Rng& rng) const {
  return params_.prior_mean + params_.prior_std * standard_normal(rng, 3);
}

Vector Lorenz63Model::sample_dynamics(const Vector& x, Rng& rng) const {
  Vector next = flow(x);
  if (params_.process_noise_std > 0.0) next += params_.process_noise_std * standard_normal(rng, 3);
  return next;
}

Vector Lorenz63Model::observation_mean(const Vector& x) const {
  Vector y(obs_dim());
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = x(params_.observed_components[static_cast<std::size_t>(i)]);
  return y;
}

Vector Lorenz63Model::sample_observation(const Vector& x, Rng& rng) const {
  return observation_mean(x) + params_.obs_noise_std * standard_normal(rng, obs_dim());
}

double Lorenz63Model::log_likelihood(const Vector& y, const Vector& x) const {
  const double s2 = params_.obs_noise_std * params_.obs_noise_std;
  return -0.5 * (y - observation_mean(x)).squaredNorm() / s2;
}

Matrix Lorenz63Model::observation_noise_cov() const {
  return Matrix::Identity(obs_dim(), obs_dim()) * (params_.obs_noise_std * params_.obs_noise_std);
}

// ---------------------------------------------------------------- ensemble operations

Ensemble propagate_ensemble(const StateSpaceModel& model, const Ensemble& ens, Rng& rng) {
  if (ens.dim() != model.state_dim()) throw std::invalid_argument("propagate_ensemble: dimension mismatch");
  Matrix next(ens.size(), ens.dim());
  for (Eigen::Index i = 0; i < ens.size(); ++i) {
    next.row(i) = model.sample_dynamics(ens.particle(i).transpose(), rng).transpose();
  }
  if (ens.has_weights()) return Ensemble(std::move(next), ens.weights());
  return Ensemble(std::move(next));
}

Ensemble sample_prior_ensemble(const StateSpaceModel& model, Eigen::Index n_particles, Rng& rng) {
  Matrix p(n_particles, model.state_dim());
  for (Eigen::Index i = 0; i < n_particles; ++i) p.row(i) = model.sample_prior(rng).transpose();
  return Ensemble(std::move(p));
}

Trajectory simulate_trajectory(const StateSpaceModel& model, int steps, std::uint64_t seed) {
  if (steps < 1) throw std::invalid_argument("simulate_trajectory: T must be >= 1");
  Rng rng = make_rng(seed);
  Trajectory traj;
  traj.initial_state = model.sample_prior(rng);
  Vector x = traj.initial_state;
  traj.states.reserve(static_cast<std::size_t>(steps));
  traj.observations.reserve(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    x = model.sample_dynamics(x, rng);
    traj.states.push_back(x);
    traj.observations.push_back(model.sample_observation(x, rng));
  }
  return traj;
}

// ---------------------------------------------------------------- exact 1-D posterior

double exact_posterior_density_1d(const SquaredObservationModel& model, double y, double x) {
  if (model.state_dim() != 1) throw std::invalid_argument("exact posterior density needs n = 1");
  const double lam = model.lambda();
  const double r = y - 0.5 * x * x;
  return std::exp(-0.5 * x * x) * std::exp(-r * r / (2.0 * lam * lam));
}

PosteriorGrid1d exact_posterior_grid_1d(const SquaredObservationModel& model, double y, double lo, double hi,
                                        Eigen::Index points) {
  if (points < 3 || points % 2 == 0) throw std::invalid_argument("posterior grid needs an odd point count >= 3");
  if (!(hi > lo)) throw std::invalid_argument("posterior grid needs hi > lo");
  PosteriorGrid1d g;
  g.x = Vector::LinSpaced(points, lo, hi);
  g.density.resize(points);
  for (Eigen::Index i = 0; i < points; ++i) g.density(i) = exact_posterior_density_1d(model, y, g.x(i));
  const double h = (hi - lo) / static_cast<double>(points - 1);
  double z = g.density(0) + g.density(points - 1);
  for (Eigen::Index i = 1; i < points - 1; ++i) z += (i % 2 == 1 ? 4.0 : 2.0) * g.density(i);
  z *= h / 3.0;
  if (!(z > 0.0)) throw std::runtime_error("posterior grid: density vanishes on the grid");
  g.density /= z;
  g.cdf.resize(points);
  g.cdf(0) = 0.0;
  for (Eigen::Index i = 1; i < points; ++i) g.cdf(i) = g.cdf(i - 1) + 0.5 * h * (g.density(i - 1) + g.density(i));
  g.cdf /= g.cdf(points - 1);
  return g;
}

Matrix sample_static_squared_posterior(const SquaredObservationModel& model, const Vector& y, Eigen::Index count,
                                       Rng& rng) {
  if (model.form() != SquaredObservationModel::Form::static_half) {
    throw std::invalid_argument("exact posterior sampling needs the static squared model");
  }
  if (y.size() != model.state_dim()) throw std::invalid_argument("exact posterior sampling: y dimension mismatch");
  const auto one_d = SquaredObservationModel::static_form(1, model.lambda());
  Matrix out(count, y.size());
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    out.col(k) = exact_posterior_grid_1d(one_d, y(k)).sample(count, rng);
  }
  return out;
}

double PosteriorGrid1d::integral() const {
  const Eigen::Index n = x.size();
  const double h = (x(n - 1) - x(0)) / static_cast<double>(n - 1);
  double s = density(0) + density(n - 1);
  for (Eigen::Index i = 1; i < n - 1; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * density(i);
  return s * h / 3.0;
}

double PosteriorGrid1d::mean() const {
  const Eigen::Index n = x.size();
  const double h = (x(n - 1) - x(0)) / static_cast<double>(n - 1);
  double s = x(0) * density(0) + x(n - 1) * density(n - 1);
  for (Eigen::Index i = 1; i < n - 1; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * x(i) * density(i);
  return s * h / 3.0;
}

Vector PosteriorGrid1d::sample(Eigen::Index count, Rng& rng) const {
  Vector out(count);
  const double* begin = cdf.data();
  const double* end = cdf.data() + cdf.size();
  for (Eigen::Index k = 0; k < count; ++k) {
    const double u = uniform01(rng);
    const auto it = std::upper_bound(begin, end, u);
    const Eigen::Index j = std::clamp<Eigen::Index>(it - begin, 1, cdf.size() - 1);
    const double c0 = cdf(j - 1);
    const double c1 = cdf(j);
    const double t = c1 > c0 ? (u - c0) / (c1 - c0) : 0.5;
    out(k) = x(j - 1) + t * (x(j) - x(j - 1));
  }
  return out;
}

std::vector<double> PosteriorGrid1d::modes() const {
  std::vector<double> out;
  const double h = x(1) - x(0);
  for (Eigen::Index i = 1; i + 1 < x.size(); ++i) {
    const double a = density(i - 1);
    const double b = density(i);
    const double c = density(i + 1);
    if (b > a && b >= c) {
      const double denom = a - 2.0 * b + c;
      const double shift = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
      out.push_back(x(i) + shift * h);
    }
  }
  return out;
}

}  // namespace otbayes

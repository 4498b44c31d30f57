#pragma once

#include "otbayes/ensemble.hpp"
#include "otbayes/types.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace otbayes {

/// Discrete-time state-space model given by samplers for the prior, the
/// dynamics kernel and the observation kernel. The likelihood is optional:
/// simulation-based models leave has_likelihood() false.
class StateSpaceModel {
 public:
  virtual ~StateSpaceModel() = default;

  virtual std::string name() const = 0;
  virtual Eigen::Index state_dim() const = 0;
  virtual Eigen::Index obs_dim() const = 0;

  virtual Vector sample_prior(Rng& rng) const = 0;
  virtual Vector sample_dynamics(const Vector& x, Rng& rng) const = 0;
  virtual Vector sample_observation(const Vector& x, Rng& rng) const = 0;

  virtual bool has_likelihood() const { return false; }
  /// log l(y | x) up to an x-independent constant. Throws if unavailable.
  virtual double log_likelihood(const Vector& y, const Vector& x) const;
  double likelihood(const Vector& y, const Vector& x) const;

  /// Observation of the form y = g(x) + w with w ~ N(0, noise_cov()).
  virtual bool has_additive_gaussian_noise() const { return false; }
  virtual Vector observation_mean(const Vector& x) const;
  virtual Matrix observation_noise_cov() const;
};

/// x' = A x + N(0, Q), y = H x + N(0, R), x0 ~ N(m0, S0).
/// R, Q and S0 may be singular (degenerate/noiseless test cases); the
/// likelihood is only available when R is positive definite.
class LinearGaussianModel final : public StateSpaceModel {
 public:
  LinearGaussianModel(Matrix H, Matrix R, Matrix A, Matrix Q, Vector prior_mean, Matrix prior_cov);

  /// Static 1-D model with A = 1, Q = 0.
  static LinearGaussianModel scalar(double prior_mean, double prior_var, double h, double r);

  std::string name() const override { return "linear_gaussian"; }
  Eigen::Index state_dim() const override { return A_.rows(); }
  Eigen::Index obs_dim() const override { return H_.rows(); }
  Vector sample_prior(Rng& rng) const override;
  Vector sample_dynamics(const Vector& x, Rng& rng) const override;
  Vector sample_observation(const Vector& x, Rng& rng) const override;
  bool has_likelihood() const override { return r_spd_; }
  double log_likelihood(const Vector& y, const Vector& x) const override;
  bool has_additive_gaussian_noise() const override { return true; }
  Vector observation_mean(const Vector& x) const override { return H_ * x; }
  Matrix observation_noise_cov() const override { return R_; }

  const Matrix& H() const { return H_; }
  const Matrix& R() const { return R_; }
  const Matrix& A() const { return A_; }
  const Matrix& Q() const { return Q_; }
  const Vector& prior_mean() const { return m0_; }
  const Matrix& prior_cov() const { return S0_; }

 private:
  Matrix H_, R_, A_, Q_;
  Vector m0_;
  Matrix S0_;
  Matrix sqrt_R_, sqrt_Q_, sqrt_S0_;
  bool r_spd_ = false;
  Eigen::LLT<Matrix> r_llt_;
};

/// Element-wise squared observation, producing bimodal posteriors.
///   static form:  X ~ N(0, I),  X' = X,                         Y = X.*X / 2 + lambda W
///   dynamic form: X0 ~ N(0, I), X' = (1 - alpha) X + 2 lambda V, Y = X.*X + lambda W
class SquaredObservationModel final : public StateSpaceModel {
 public:
  enum class Form { static_half, dynamic };

  static SquaredObservationModel static_form(Eigen::Index n, double lambda_w);
  static SquaredObservationModel dynamic_form(Eigen::Index n, double alpha = 0.1, double lambda = 0.31622776601683794);

  std::string name() const override { return form_ == Form::static_half ? "static_squared" : "dynamic_squared"; }
  Eigen::Index state_dim() const override { return n_; }
  Eigen::Index obs_dim() const override { return n_; }
  Vector sample_prior(Rng& rng) const override;
  Vector sample_dynamics(const Vector& x, Rng& rng) const override;
  Vector sample_observation(const Vector& x, Rng& rng) const override;
  bool has_likelihood() const override { return true; }
  double log_likelihood(const Vector& y, const Vector& x) const override;
  bool has_additive_gaussian_noise() const override { return true; }
  Vector observation_mean(const Vector& x) const override;
  Matrix observation_noise_cov() const override;

  Form form() const { return form_; }
  double alpha() const { return alpha_; }
  double lambda() const { return lambda_; }
  /// Coefficient c in y = c x.*x + noise (1/2 static, 1 dynamic).
  double obs_coefficient() const { return form_ == Form::static_half ? 0.5 : 1.0; }

 private:
  SquaredObservationModel(Form form, Eigen::Index n, double alpha, double lambda);
  Form form_;
  Eigen::Index n_;
  double alpha_;
  double lambda_;
};

struct Lorenz63Params {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
  double dt_integration = 0.01;
  int steps_per_observation = 10;
  double obs_noise_std = 2.0;
  /// Std of the Gaussian kick added once per observation interval.
  double process_noise_std = 0.1;
  Vector prior_mean = Vector::Zero(0);
  double prior_std = 10.0;
  std::vector<int> observed_components = {0, 2};
};

class Lorenz63Model final : public StateSpaceModel {
 public:
  explicit Lorenz63Model(Lorenz63Params params = {});

  std::string name() const override { return "lorenz63"; }
  Eigen::Index state_dim() const override { return 3; }
  Eigen::Index obs_dim() const override { return static_cast<Eigen::Index>(params_.observed_components.size()); }
  Vector sample_prior(Rng& rng) const override;
  Vector sample_dynamics(const Vector& x, Rng& rng) const override;
  Vector sample_observation(const Vector& x, Rng& rng) const override;
  bool has_likelihood() const override { return true; }
  double log_likelihood(const Vector& y, const Vector& x) const override;
  bool has_additive_gaussian_noise() const override { return true; }
  Vector observation_mean(const Vector& x) const override;
  Matrix observation_noise_cov() const override;

  /// Deterministic flow over one observation interval.
  Vector flow(const Vector& x) const;
  const Lorenz63Params& params() const { return params_; }

 private:
  Lorenz63Params params_;
};

/// One classical RK4 step of the Lorenz-63 vector field. Throws on a non-finite result.
Vector lorenz63_step(const Lorenz63Params& params, const Vector& x);
Vector lorenz63_vector_field(const Lorenz63Params& params, const Vector& x);

/// Pushes every particle independently through the dynamics kernel.
Ensemble propagate_ensemble(const StateSpaceModel& model, const Ensemble& ens, Rng& rng);

/// Draws N i.i.d. prior samples.
Ensemble sample_prior_ensemble(const StateSpaceModel& model, Eigen::Index n_particles, Rng& rng);

struct Trajectory {
  Vector initial_state;
  std::vector<Vector> states;        // X_1 .. X_T
  std::vector<Vector> observations;  // Y_1 .. Y_T
};

/// X_0 ~ prior, X_t ~ a(.|X_{t-1}), Y_t ~ h(.|X_t) for t = 1..T, seeded.
Trajectory simulate_trajectory(const StateSpaceModel& model, int steps, std::uint64_t seed);

/// Unnormalized exact posterior density of the static squared model with n = 1:
/// exp(-x^2/2) exp(-(y - x^2/2)^2 / (2 lambda^2)).
double exact_posterior_density_1d(const SquaredObservationModel& model, double y, double x);

/// Exact 1-D posterior tabulated on a uniform grid and normalized by Simpson quadrature.
struct PosteriorGrid1d {
  Vector x;
  Vector density;  // normalized
  Vector cdf;      // cumulative, ends at 1

  double integral() const;
  double mean() const;
  /// Draws samples by inverse-CDF interpolation.
  Vector sample(Eigen::Index count, Rng& rng) const;
  /// Locations of local maxima of the density (refined by parabolic interpolation).
  std::vector<double> modes() const;
};

/// Exact posterior samples of the static squared model with i.i.d. components:
/// component k is drawn from the 1-D posterior given y(k).
Matrix sample_static_squared_posterior(const SquaredObservationModel& model, const Vector& y, Eigen::Index count,
                                       Rng& rng);

PosteriorGrid1d exact_posterior_grid_1d(const SquaredObservationModel& model, double y, double lo = -6.0,
                                        double hi = 6.0, Eigen::Index points = 4001);

}  // namespace otbayes

#include "otbayes/models.hpp"
#include "otbayes/random.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace otbayes;

TEST_CASE("linear Gaussian sampling has the configured moments") {
  Matrix S0(2, 2);
  S0 << 2.0, 0.5, 0.5, 1.0;
  const LinearGaussianModel m(Matrix::Identity(2, 2), Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                              Matrix::Zero(2, 2), Vector::Ones(2), S0);
  Rng rng = make_rng(1);
  const Ensemble e = sample_prior_ensemble(m, 100000, rng);
  CHECK((e.mean() - Vector::Ones(2)).norm() < 0.02);
  CHECK((e.covariance() - S0).norm() < 0.05);
}

TEST_CASE("linear Gaussian log-likelihood is the Gaussian quadratic form") {
  Matrix R(2, 2);
  R << 1.0, 0.3, 0.3, 0.5;
  Matrix H(2, 1);
  H << 1.0, -2.0;
  const LinearGaussianModel m(H, R, Matrix::Identity(1, 1), Matrix::Zero(1, 1), Vector::Zero(1),
                              Matrix::Identity(1, 1));
  const Vector y = (Vector(2) << 0.4, 0.1).finished();
  const Vector x1 = Vector::Constant(1, 0.2), x2 = Vector::Constant(1, -0.7);
  auto quad = [&](const Vector& x) {
    const Vector r = y - H * x;
    return -0.5 * r.dot(R.inverse() * r);
  };
  // Only differences are meaningful: the constant is x-independent.
  CHECK(m.log_likelihood(y, x1) - m.log_likelihood(y, x2) == doctest::Approx(quad(x1) - quad(x2)).epsilon(1e-12));
}

TEST_CASE("singular observation noise disables the likelihood") {
  const LinearGaussianModel m = LinearGaussianModel::scalar(0.0, 1.0, 1.0, 0.0);
  CHECK_FALSE(m.has_likelihood());
  CHECK_THROWS(m.log_likelihood(Vector::Zero(1), Vector::Zero(1)));
  Rng rng = make_rng(0);
  const Vector x = Vector::Constant(1, 0.3);
  CHECK(m.sample_observation(x, rng)(0) == doctest::Approx(0.3));
}

TEST_CASE("non-PSD covariances are rejected") {
  CHECK_THROWS_AS(LinearGaussianModel::scalar(0.0, -1.0, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(LinearGaussianModel::scalar(0.0, 1.0, 1.0, -0.1), std::invalid_argument);
}

TEST_CASE("dynamic squared model kernels") {
  const auto m = SquaredObservationModel::dynamic_form(2, 0.1, 0.5);
  const Vector x = (Vector(2) << 1.0, -2.0).finished();
  Rng rng = make_rng(3);
  const int n = 100000;
  Vector s1 = Vector::Zero(2), s2 = Vector::Zero(2), o1 = Vector::Zero(2);
  for (int i = 0; i < n; ++i) {
    const Vector d = m.sample_dynamics(x, rng);
    s1 += d;
    s2 += d.cwiseProduct(d);
    o1 += m.sample_observation(x, rng);
  }
  const Vector mean = s1 / n;
  CHECK((mean - 0.9 * x).norm() < 0.02);
  const Vector var = s2 / n - mean.cwiseProduct(mean);
  CHECK(var(0) == doctest::Approx(4.0 * 0.25).epsilon(0.03));
  CHECK((o1 / n - x.cwiseProduct(x)).norm() < 0.02);
  CHECK(m.observation_mean(x).isApprox(x.cwiseProduct(x)));
}

TEST_CASE("static squared model observes half the square and keeps the state") {
  const auto m = SquaredObservationModel::static_form(3, 0.4);
  const Vector x = (Vector(3) << 1.0, 2.0, -1.0).finished();
  Rng rng = make_rng(0);
  CHECK(m.sample_dynamics(x, rng) == x);
  CHECK(m.observation_mean(x).isApprox(0.5 * x.cwiseProduct(x)));
  CHECK(m.observation_noise_cov().isApprox(0.16 * Matrix::Identity(3, 3)));
}

TEST_CASE("Lorenz-63 vector field and RK4 step") {
  Lorenz63Params p;
  const Vector x = (Vector(3) << 1.0, 2.0, 3.0).finished();
  const Vector f = lorenz63_vector_field(p, x);
  CHECK(f(0) == doctest::Approx(10.0));
  CHECK(f(1) == doctest::Approx(1.0 * (28.0 - 3.0) - 2.0));
  CHECK(f(2) == doctest::Approx(2.0 - 8.0));

  // Reference: forward Euler with a 1000x finer step.
  Vector e = x;
  const int sub = 1000;
  for (int i = 0; i < sub; ++i) e += (p.dt_integration / sub) * lorenz63_vector_field(p, e);
  CHECK((lorenz63_step(p, x) - e).norm() < 1e-3);

  const Lorenz63Model m(p);
  Vector manual = x;
  for (int i = 0; i < p.steps_per_observation; ++i) manual = lorenz63_step(p, manual);
  CHECK(m.flow(x).isApprox(manual));
}

TEST_CASE("Lorenz-63 observes the configured components") {
  const Lorenz63Model m;
  CHECK(m.obs_dim() == 2);
  const Vector x = (Vector(3) << 1.0, 2.0, 3.0).finished();
  CHECK(m.observation_mean(x) == (Vector(2) << 1.0, 3.0).finished());
  CHECK(m.observation_noise_cov().isApprox(4.0 * Matrix::Identity(2, 2)));
}

TEST_CASE("trajectory simulation is seeded") {
  const auto m = SquaredObservationModel::dynamic_form(1);
  const Trajectory a = simulate_trajectory(m, 10, 42);
  const Trajectory b = simulate_trajectory(m, 10, 42);
  const Trajectory c = simulate_trajectory(m, 10, 43);
  REQUIRE(a.states.size() == 10);
  REQUIRE(a.observations.size() == 10);
  for (int t = 0; t < 10; ++t) {
    CHECK(a.states[t] == b.states[t]);
    CHECK(a.observations[t] == b.observations[t]);
  }
  CHECK(a.states[0] != c.states[0]);
}

TEST_CASE("exact 1-D posterior grid: normalization, modes and symmetry") {
  const auto m = SquaredObservationModel::static_form(1, 0.4);
  const PosteriorGrid1d g = exact_posterior_grid_1d(m, 1.0);
  CHECK(g.integral() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(g.mean()) < 1e-9);
  const auto modes = g.modes();
  REQUIRE(modes.size() == 2);
  const double mode = oracle::squared_positive_mode(1.0, 0.4, 0.5);
  CHECK(mode == doctest::Approx(std::sqrt(2.0 * (1.0 - 0.16))).epsilon(1e-6));
  CHECK(std::abs(modes[0] + mode) < 1e-3);
  CHECK(std::abs(modes[1] - mode) < 1e-3);
}

TEST_CASE("exact posterior samples reproduce the half means") {
  const auto m = SquaredObservationModel::static_form(2, 0.4);
  Rng rng = make_rng(9);
  const Matrix s = sample_static_squared_posterior(m, Vector::Ones(2), 100000, rng);
  const double expected = oracle::squared_positive_half_mean(1.0, 0.4, 0.5);
  for (int k = 0; k < 2; ++k) {
    const Vector col = s.col(k);
    const double pos = (col.array() > 0).select(col.array(), 0.0).sum() / (col.array() > 0).count();
    CHECK(pos == doctest::Approx(expected).epsilon(0.01));
  }
}

TEST_CASE("propagate_ensemble keeps the weights") {
  const auto m = SquaredObservationModel::dynamic_form(1);
  Rng rng = make_rng(0);
  const Ensemble e(Matrix::Zero(4, 1), (Vector(4) << 0.1, 0.2, 0.3, 0.4).finished());
  const Ensemble p = propagate_ensemble(m, e, rng);
  CHECK(p.has_weights());
  CHECK(p.weights().isApprox(e.weights()));
}

TEST_CASE("Lorenz-63 equilibria stay put") {
  Lorenz63Params p;
  const double c = std::sqrt(p.beta * (p.rho - 1.0));
  const Vector fixed = (Vector(3) << c, c, p.rho - 1.0).finished();
  CHECK((lorenz63_step(p, fixed) - fixed).norm() < 1e-9);
  CHECK(lorenz63_step(p, Vector::Zero(3)).norm() == 0.0);
}

TEST_CASE("Lorenz-63 trajectories separate and RK4 converges under step halving") {
  Lorenz63Params p;
  Vector a = (Vector(3) << 1.0, 1.0, 20.0).finished();
  Vector b = a + Vector::Constant(3, 1e-6);
  for (int i = 0; i < 500; ++i) {
    a = lorenz63_step(p, a);
    b = lorenz63_step(p, b);
  }
  CHECK((a - b).norm() > 10.0 * std::sqrt(3.0) * 1e-6);

  // Global error shrinks by about 2^4 when the step is halved.
  auto integrate = [&](double dt, int steps) {
    Lorenz63Params q = p;
    q.dt_integration = dt;
    Vector x = (Vector(3) << 1.0, 1.0, 20.0).finished();
    for (int i = 0; i < steps; ++i) x = lorenz63_step(q, x);
    return x;
  };
  const Vector fine = integrate(0.0025, 200);
  const double e1 = (integrate(0.02, 25) - fine).norm();
  const double e2 = (integrate(0.01, 50) - fine).norm();
  CHECK(e1 / e2 > 12.0);
  CHECK(e1 / e2 < 20.0);
}

TEST_CASE("identity dynamics leave the ensemble unchanged") {
  const LinearGaussianModel m(Matrix::Identity(2, 2), Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                              Matrix::Zero(2, 2), Vector::Zero(2), Matrix::Identity(2, 2));
  Rng rng = make_rng(1);
  const Ensemble e = sample_prior_ensemble(m, 10, rng);
  CHECK(propagate_ensemble(m, e, rng).particles() == e.particles());
}

TEST_CASE("linear propagation halves the mean") {
  const LinearGaussianModel m(Matrix::Identity(1, 1), Matrix::Identity(1, 1), Matrix::Constant(1, 1, 0.5),
                              Matrix::Identity(1, 1), Vector::Zero(1), Matrix::Identity(1, 1));
  Rng rng = make_rng(2);
  const Ensemble e(Matrix::Constant(100000, 1, 4.0));
  const Ensemble p = propagate_ensemble(m, e, rng);
  CHECK(std::abs(p.mean()(0) - 2.0) < 3.0 / std::sqrt(100000.0));
}

TEST_CASE("noiseless linear trajectory is constant and observed exactly") {
  const LinearGaussianModel m(Matrix::Identity(1, 1), Matrix::Zero(1, 1), Matrix::Identity(1, 1), Matrix::Zero(1, 1),
                              Vector::Constant(1, 1.5), Matrix::Zero(1, 1));
  const Trajectory t = simulate_trajectory(m, 5, 0);
  for (int i = 0; i < 5; ++i) {
    CHECK(t.states[i](0) == 1.5);
    CHECK(t.observations[i](0) == 1.5);
  }
}

TEST_CASE("dynamic squared observation residual has std lambda") {
  const auto m = SquaredObservationModel::dynamic_form(1);
  const Trajectory t = simulate_trajectory(m, 10000, 5);
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double r = t.observations[i](0) - t.states[i](0) * t.states[i](0);
    s += r;
    ss += r * r;
  }
  const double sd = std::sqrt(ss / 10000 - (s / 10000) * (s / 10000));
  CHECK(sd == doctest::Approx(std::sqrt(0.1)).epsilon(0.03));
}

TEST_CASE("exact density is even and the narrow-noise modes approach sqrt 2") {
  const auto m = SquaredObservationModel::static_form(1, 0.04);
  for (double x : {0.3, 1.2, 2.5}) CHECK(exact_posterior_density_1d(m, 1.0, x) == exact_posterior_density_1d(m, 1.0, -x));
  const auto modes = exact_posterior_grid_1d(m, 1.0).modes();
  REQUIRE(modes.size() == 2);
  CHECK(modes[1] == doctest::Approx(oracle::squared_positive_mode(1.0, 0.04, 0.5)).epsilon(1e-3));
  CHECK(modes[1] == doctest::Approx(1.413).epsilon(1e-3));
}

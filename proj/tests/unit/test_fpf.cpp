#include "otbayes/fpf.hpp"
#include "otbayes/random.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace otbayes;

namespace {

Ensemble gaussian_ensemble(Eigen::Index n, double sigma, Rng& rng) {
  Matrix x(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) x(i, 0) = sigma * standard_normal(rng);
  return Ensemble(x);
}

Vector h_linear(const Ensemble& e) { return e.particles().col(0); }

}  // namespace

TEST_CASE("constant gain is the empirical covariance of x and h") {
  Rng rng = make_rng(1);
  const Ensemble e = gaussian_ensemble(500, 1.5, rng);
  const Vector hv = e.particles().col(0).array().cube().matrix();
  const GainField g = gain_constant(e, hv);
  const Matrix& x = e.particles();
  const double expected = ((x.col(0).array() - x.col(0).mean()) * (hv.array() - hv.mean())).mean();
  CHECK(g.gains.rows() == 500);
  CHECK((g.gains.array() - expected).abs().maxCoeff() < 1e-12);
}

TEST_CASE("diffusion-map gain for a linear observation of a Gaussian is close to the variance") {
  Rng rng = make_rng(2);
  const Ensemble e = gaussian_ensemble(1000, 1.0, rng);
  const GainField g = gain_diffusion_map(e, h_linear(e), 0.05);
  CHECK(g.gains.col(0).mean() == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("diffusion-map gain follows the exact gain of a bimodal prior") {
  // Mixture 1/2 N(-1, 0.36) + 1/2 N(1, 0.36) with h(x) = x.
  auto density = [](double x) {
    auto n = [](double m, double x) { return std::exp(-0.5 * (x - m) * (x - m) / 0.36); };
    return 0.5 * n(-1.0, x) + 0.5 * n(1.0, x);
  };
  Rng rng = make_rng(3);
  Matrix x(1000, 1);
  for (Eigen::Index i = 0; i < 1000; ++i) x(i, 0) = (i % 2 ? 1.0 : -1.0) + 0.6 * standard_normal(rng);
  const GainField g = gain_diffusion_map(Ensemble(x), x.col(0), 0.05);
  double err = 0.0, scale = 0.0;
  for (Eigen::Index i = 0; i < 1000; ++i) {
    if (std::abs(x(i, 0)) > 2.5) continue;  // the tails are poorly resolved by any kernel estimate
    const double exact = oracle::poisson_gain_1d(density, [](double s) { return s; }, 0.0, x(i, 0));
    err += std::abs(g.gains(i, 0) - exact);
    scale += exact;
  }
  CHECK(err / scale < 0.15);
}

TEST_CASE("FPF static update reproduces the Gaussian posterior") {
  Rng rng = make_rng(4);
  const Ensemble prior = gaussian_ensemble(4000, 1.0, rng);
  // y = x + N(0, 1) with y = 1 -> N(1/2, 1/2); path increments y dt over [0, 1].
  const int steps = 50;
  const std::vector<double> inc(steps, 1.0 / steps);
  const Ensemble post = fpf_static_update(prior, inc, [](const Vector& x) { return x(0); }, 1.0 / steps);
  CHECK(post.mean()(0) == doctest::Approx(0.5).epsilon(0.05));
  CHECK(post.covariance()(0, 0) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("FPF update validates its inputs") {
  Rng rng = make_rng(0);
  const Ensemble e = gaussian_ensemble(10, 1.0, rng);
  auto h = [](const Vector& x) { return x(0); };
  CHECK_THROWS(fpf_static_update(e, {0.1}, h, 0.0));
  CHECK_THROWS(fpf_static_update(e, {std::nan("")}, h, 0.1));
}

TEST_CASE("Gauss-Hermite rule integrates normal moments exactly") {
  const auto [nodes, weights] = gauss_hermite_normal(10);
  CHECK(weights.sum() == doctest::Approx(1.0).epsilon(1e-13));
  auto moment = [&](int p) { return (weights.array() * nodes.array().pow(p)).sum(); };
  CHECK(std::abs(moment(1)) < 1e-13);
  CHECK(moment(2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(moment(4) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(moment(6) == doctest::Approx(15.0).epsilon(1e-12));
  CHECK(moment(18) == doctest::Approx(34459425.0).epsilon(1e-10));
}

TEST_CASE("log-log slope of a power law") {
  const std::vector<double> dt = {0.1, 0.05, 0.025};
  std::vector<double> r;
  for (double d : dt) r.push_back(-3.0 * d * d * d);
  CHECK(loglog_slope(dt, r) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(loglog_slope(dt, r) == doctest::Approx(oracle::loglog_slope(dt, {3e-3, 3.75e-4, 4.6875e-5})).epsilon(1e-12));
}

TEST_CASE("J1 of the Gaussian instance is one half") {
  Rng rng = make_rng(5);
  const Ensemble e = gaussian_ensemble(100000, 1.0, rng);
  const ExpansionInstance inst = gaussian_linear_instance();
  const double h_hat = e.particles().col(0).mean();
  const ExpansionTerms t = expansion_terms(inst.phi, inst.psi, inst.kappa, inst.u, e, inst.h, h_hat);
  // J1 = E[phi (h - h_hat)] - 1/2 E|grad phi|^2 + 1/2 E|kappa - grad phi|^2 = Var(X) - 1/2.
  const double var = (e.particles().col(0).array() - h_hat).square().mean();
  CHECK(t.J1 == doctest::Approx(var - 0.5).epsilon(1e-12));
  CHECK(std::abs(t.J1 - 0.5) < 3.0 / std::sqrt(100000.0));
}

TEST_CASE("complete second-order term adds the omitted contributions") {
  // For the Gaussian instance: published J2 = 1/8, complete J2 = -3/8.
  Rng rng = make_rng(6);
  const Ensemble e = gaussian_ensemble(400000, 1.0, rng);
  const ExpansionInstance inst = gaussian_linear_instance();
  const double h_hat = e.particles().col(0).mean();
  const auto pub = expansion_terms(inst.phi, inst.psi, inst.kappa, inst.u, e, inst.h, h_hat, ExpansionForm::published);
  const auto full = expansion_terms(inst.phi, inst.psi, inst.kappa, inst.u, e, inst.h, h_hat, ExpansionForm::complete);
  CHECK(pub.J2 == doctest::Approx(0.125).epsilon(0.05));
  CHECK(full.J2 == doctest::Approx(-0.375).epsilon(0.05));
  CHECK(pub.J1 == full.J1);
}

TEST_CASE("expansion residual of the zero instance vanishes") {
  Rng rng = make_rng(7);
  const Ensemble e = gaussian_ensemble(50, 1.0, rng);
  const ExpansionReport r = verify_expansion(e, zero_instance(), {0.1, 0.05});
  for (double v : r.objective) CHECK(std::abs(v) < 1e-14);
}

TEST_CASE("expansion residual decays faster than dt^2 with the complete second-order term") {
  Rng rng = make_rng(8);
  const Ensemble e = gaussian_ensemble(200, 1.0, rng);
  const std::vector<double> dts = {0.1, 0.05, 0.025, 0.0125};
  const ExpansionReport complete = verify_expansion(e, gaussian_linear_instance(), dts);
  CHECK(complete.slope >= 2.5);
  VerifyOptions first_order;
  first_order.include_j2 = false;
  const ExpansionReport j1_only = verify_expansion(e, gaussian_linear_instance(), dts, first_order);
  CHECK(j1_only.slope == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("polynomial J1 minimizer recovers grad phi in the span") {
  Rng rng = make_rng(9);
  const Ensemble e = gaussian_ensemble(300, 1.0, rng);
  const VectorField grad_phi = [](const Vector& x) { return Vector(Vector::Constant(1, 1.0 + 2.0 * x(0) * x(0))); };
  const Matrix k = minimize_j1_polynomial(e, grad_phi, 2);
  for (Eigen::Index i = 0; i < 300; ++i) {
    CHECK(k(i, 0) == doctest::Approx(grad_phi(e.particle(i).transpose())(0)).epsilon(1e-8));
  }
}

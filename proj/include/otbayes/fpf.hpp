#pragma once

#include "otbayes/ensemble.hpp"
#include "otbayes/types.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace otbayes {

enum class GainMethod { constant, diffusion_map };

/// Gain vectors evaluated at the particles (N x n).
struct GainField {
  Matrix gains;
  GainMethod method = GainMethod::constant;
};

/// Constant-gain approximation: (1/N) sum_i (h(X^i) - h_hat) X^i at every particle.
GainField gain_constant(const Ensemble& ens, const Vector& h_values);

/// Kernel (diffusion-map) approximation of the Poisson-equation gain.
/// Gaussian kernel exp(-|x - x'|^2 / (4 eps)), Markov normalization, fixed-point
/// iteration for the potential at the particles (stops at `iters` or tol).
GainField gain_diffusion_map(const Ensemble& ens, const Vector& h_values, double epsilon, int iters = 1000,
                             double tol = 1e-8);

struct GainOptions {
  GainMethod method = GainMethod::constant;
  double epsilon = 0.1;
  int max_iters = 1000;
  double tol = 1e-8;
};

GainField compute_gain(const Ensemble& ens, const Vector& h_values, const GainOptions& options);

using ObservationFn = std::function<double(const Vector&)>;

/// FPF static update driven by scalar observation increments dY over steps of
/// length dt: dX = K(X) o (dY - (h(X) + h_hat)/2 dt), integrated by Heun's
/// predictor-corrector with the gain re-solved at the predicted ensemble.
Ensemble fpf_static_update(const Ensemble& ens, const std::vector<double>& increments, const ObservationFn& h,
                           double dt, const GainOptions& options = {});

/// Scalar field with derivatives. `third` evaluates grad^3 phi[v, v, v]; when
/// empty it is obtained by central differences of the Hessian.
struct ScalarField {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::function<Matrix(const Vector&)> hessian;
  std::function<double(const Vector&, const Vector&)> third;

  static ScalarField zero(Eigen::Index n);
  double third_directional(const Vector& x, const Vector& v) const;
};

using VectorField = std::function<Vector(const Vector&)>;

/// `published` evaluates J2 as printed with the expansion; `complete` adds the
/// second-order contributions of E[dY^2], the mixed Hessian term and the third
/// derivative of phi that the printed form leaves out.
enum class ExpansionForm { published, complete };

struct ExpansionTerms {
  double J1 = 0.0;
  double J2 = 0.0;
};

/// Ensemble averages of the first- and second-order coefficients of the
/// objective for f = phi y + psi dt, T = x + kappa y + u dt.
ExpansionTerms expansion_terms(const ScalarField& phi, const ScalarField& psi, const VectorField& kappa,
                               const VectorField& u, const Ensemble& ens, const ObservationFn& h, double h_hat,
                               ExpansionForm form = ExpansionForm::published);

struct ExpansionInstance {
  ScalarField phi;
  ScalarField psi;
  VectorField kappa;
  VectorField u;
  ObservationFn h;
};

/// 1-D standard Gaussian prior, h(x) = x: phi = x, kappa = 1, psi = -x^2/4, u = -x/2.
ExpansionInstance gaussian_linear_instance();
/// Same prior and h with phi = psi = kappa = u = 0.
ExpansionInstance zero_instance();

enum class ExpansionSampling { quadrature, monte_carlo };

struct VerifyOptions {
  ExpansionForm form = ExpansionForm::complete;
  bool include_j2 = true;
  ExpansionSampling sampling = ExpansionSampling::quadrature;
  /// Gauss-Hermite nodes for the noise increment (quadrature sampling).
  int quadrature_nodes = 20;
  /// Monte-Carlo sampling draws one increment per particle and a fresh shuffle.
  std::uint64_t seed = 0;
};

struct ExpansionReport {
  std::vector<double> dt;
  std::vector<double> objective;
  std::vector<double> residual;
  ExpansionTerms terms;
  double slope = 0.0;
};

/// Evaluates the max-min objective for the instance at each dt, subtracts
/// J1 dt (+ J2 dt^2) and fits the log-log slope of |residual| against dt.
/// Quadrature sampling integrates the increment exactly against the product of
/// the ensemble measure with itself, so the residual carries no sampling noise.
ExpansionReport verify_expansion(const Ensemble& ens, const ExpansionInstance& inst, const std::vector<double>& dt_list,
                                 const VerifyOptions& options = {});

/// Gauss-Hermite rule for the standard normal (Golub-Welsch): nodes and weights summing to 1.
std::pair<Vector, Vector> gauss_hermite_normal(int nodes);

/// Least-squares slope of log|r| against log dt.
double loglog_slope(const std::vector<double>& dt, const std::vector<double>& r);

/// Minimizes J1 over kappa in the span of {1, x_k^p : p = 1..degree} for fixed phi;
/// returns the fitted kappa at the particles (N x n).
Matrix minimize_j1_polynomial(const Ensemble& ens, const VectorField& grad_phi, int degree);

}  // namespace otbayes

#include "otbayes/fpf.hpp"

#include "otbayes/ot_bayes.hpp"
#include "otbayes/random.hpp"

#include <cmath>
#include <stdexcept>

namespace otbayes {

namespace {

Vector evaluate_h(const Matrix& particles, const ObservationFn& h) {
  Vector v(particles.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = h(particles.row(i).transpose());
  return v;
}

void check_h(const Ensemble& ens, const Vector& h_values) {
  if (h_values.size() != ens.size()) throw std::invalid_argument("gain: h_values length must equal N");
  if (!h_values.allFinite()) throw std::invalid_argument("gain: h_values must be finite");
}

}  // namespace

GainField gain_constant(const Ensemble& ens, const Vector& h_values) {
  check_h(ens, h_values);
  const Vector centered = h_values.array() - h_values.mean();
  const Vector k = ens.particles().transpose() * centered / static_cast<double>(ens.size());
  return {k.transpose().replicate(ens.size(), 1), GainMethod::constant};
}

GainField gain_diffusion_map(const Ensemble& ens, const Vector& h_values, double epsilon, int iters, double tol) {
  check_h(ens, h_values);
  if (!(epsilon > 0.0)) throw std::invalid_argument("gain_diffusion_map: epsilon must be > 0");
  if (iters < 1) throw std::invalid_argument("gain_diffusion_map: iters must be >= 1");
  const Matrix& x = ens.particles();
  const Eigen::Index n = x.rows();

  // Kernel g, symmetric normalization k_ij = g_ij / sqrt(s_i s_j), then row-stochastic T.
  const Vector sq = x.rowwise().squaredNorm();
  Matrix t = -2.0 * x * x.transpose();
  t.colwise() += sq;
  t.rowwise() += sq.transpose();
  t = (t.cwiseMax(0.0).array() * (-1.0 / (4.0 * epsilon))).exp().matrix();
  const Vector inv_sqrt = t.rowwise().sum().cwiseSqrt().cwiseInverse();
  t = inv_sqrt.asDiagonal() * t * inv_sqrt.asDiagonal();
  const Vector row = t.rowwise().sum().cwiseInverse();
  t = row.asDiagonal() * t;

  const Vector rhs = epsilon * (h_values.array() - h_values.mean()).matrix();
  Vector phi = Vector::Zero(n);
  for (int k = 0; k < iters; ++k) {
    Vector next = t * phi + rhs;
    next.array() -= next.mean();
    if (!next.allFinite()) throw std::runtime_error("gain_diffusion_map: fixed-point iteration diverged");
    const double change = (next - phi).cwiseAbs().maxCoeff();
    phi = std::move(next);
    if (change < tol) break;
  }
  const Vector r = phi + rhs;
  const Matrix tx = t * x;
  const Matrix trx = t * (r.asDiagonal() * x);
  const Vector tr = t * r;
  Matrix gains = (trx - tr.asDiagonal() * tx) / (2.0 * epsilon);
  if (!gains.allFinite()) throw std::runtime_error("gain_diffusion_map: non-finite gain");
  return {std::move(gains), GainMethod::diffusion_map};
}

GainField compute_gain(const Ensemble& ens, const Vector& h_values, const GainOptions& o) {
  if (o.method == GainMethod::constant) return gain_constant(ens, h_values);
  return gain_diffusion_map(ens, h_values, o.epsilon, o.max_iters, o.tol);
}

Ensemble fpf_static_update(const Ensemble& ens, const std::vector<double>& increments, const ObservationFn& h,
                           double dt, const GainOptions& options) {
  if (!(dt > 0.0)) throw std::invalid_argument("fpf_static_update: dt must be > 0");
  if (ens.has_weights()) throw std::invalid_argument("fpf_static_update: ensemble must have uniform weights");
  Matrix x = ens.particles();
  auto drift = [&](const Matrix& p, double dy) {
    const Vector hv = evaluate_h(p, h);
    const double h_hat = hv.mean();
    const Matrix k = compute_gain(Ensemble(p), hv, options).gains;
    const Vector innovation = (dy - 0.5 * (hv.array() + h_hat) * dt).matrix();
    return Matrix(innovation.asDiagonal() * k);
  };
  for (double dy : increments) {
    if (!std::isfinite(dy)) throw std::invalid_argument("fpf_static_update: non-finite increment");
    const Matrix d0 = drift(x, dy);
    const Matrix predicted = x + d0;
    const Matrix d1 = drift(predicted, dy);
    x += 0.5 * (d0 + d1);
    if (!x.allFinite()) throw std::runtime_error("fpf_static_update: particle became non-finite");
  }
  return Ensemble(std::move(x));
}

// ---------------------------------------------------------------- expansion

ScalarField ScalarField::zero(Eigen::Index n) {
  return {[](const Vector&) { return 0.0; }, [n](const Vector&) { return Vector(Vector::Zero(n)); },
          [n](const Vector&) { return Matrix(Matrix::Zero(n, n)); }, [](const Vector&, const Vector&) { return 0.0; }};
}

double ScalarField::third_directional(const Vector& x, const Vector& v) const {
  if (third) return third(x, v);
  if (!hessian) throw std::logic_error("scalar field: Hessian required for the third derivative");
  const double step = 1e-4;
  const double plus = v.dot(hessian(x + step * v) * v);
  const double minus = v.dot(hessian(x - step * v) * v);
  return (plus - minus) / (2.0 * step);
}

ExpansionTerms expansion_terms(const ScalarField& phi, const ScalarField& psi, const VectorField& kappa,
                               const VectorField& u, const Ensemble& ens, const ObservationFn& h, double h_hat,
                               ExpansionForm form) {
  const Eigen::Index n = ens.size();
  double j1 = 0.0, j2 = 0.0;
  double h2 = 0.0, kk = 0.0, gk = 0.0, extra = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector x = ens.particle(i).transpose();
    const Vector k = kappa(x);
    const Vector uu = u(x);
    const Vector gphi = phi.gradient(x);
    const Vector gpsi = psi.gradient(x);
    const Matrix hphi = phi.hessian(x);
    const Matrix hpsi = psi.hessian(x);
    const double hx = h(x);
    j1 += 0.5 * (k - gphi).squaredNorm() - 0.5 * gphi.squaredNorm() + phi.value(x) * (hx - h_hat);
    j2 += 0.5 * uu.squaredNorm() - gpsi.dot(uu) + uu.dot(k - gphi) * h_hat - gpsi.dot(k) * h_hat -
          0.5 * k.dot(hpsi * k) - 1.5 * k.dot(hphi * k) * h_hat;
    if (form == ExpansionForm::complete) {
      h2 += hx * hx;
      kk += 0.5 * k.squaredNorm();
      gk += gphi.dot(k);
      extra += -k.dot(hphi * uu) - 0.5 * phi.third_directional(x, k);
    }
  }
  const auto dn = static_cast<double>(n);
  ExpansionTerms t{j1 / dn, j2 / dn};
  if (form == ExpansionForm::complete) t.J2 += (h2 / dn) * (kk / dn - gk / dn) + extra / dn;
  return t;
}

ExpansionInstance gaussian_linear_instance() {
  ExpansionInstance inst;
  inst.phi = {[](const Vector& x) { return x(0); }, [](const Vector&) { return Vector(Vector::Ones(1)); },
              [](const Vector&) { return Matrix(Matrix::Zero(1, 1)); }, [](const Vector&, const Vector&) { return 0.0; }};
  inst.psi = {[](const Vector& x) { return -0.25 * x(0) * x(0); },
              [](const Vector& x) { return Vector(Vector::Constant(1, -0.5 * x(0))); },
              [](const Vector&) { return Matrix(Matrix::Constant(1, 1, -0.5)); },
              [](const Vector&, const Vector&) { return 0.0; }};
  inst.kappa = [](const Vector&) { return Vector(Vector::Ones(1)); };
  inst.u = [](const Vector& x) { return Vector(-0.5 * x); };
  inst.h = [](const Vector& x) { return x(0); };
  return inst;
}

ExpansionInstance zero_instance() {
  ExpansionInstance inst;
  inst.phi = ScalarField::zero(1);
  inst.psi = ScalarField::zero(1);
  inst.kappa = [](const Vector& x) { return Vector(Vector::Zero(x.size())); };
  inst.u = inst.kappa;
  inst.h = [](const Vector& x) { return x(0); };
  return inst;
}

std::pair<Vector, Vector> gauss_hermite_normal(int nodes) {
  if (nodes < 1) throw std::invalid_argument("gauss_hermite_normal: nodes must be >= 1");
  // Jacobi matrix of the probabilists' Hermite polynomials.
  Matrix jac = Matrix::Zero(nodes, nodes);
  for (int k = 1; k < nodes; ++k) jac(k, k - 1) = jac(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Matrix> es(jac);
  Vector w = es.eigenvectors().row(0).transpose().cwiseAbs2();
  return {es.eigenvalues(), w / w.sum()};
}

double loglog_slope(const std::vector<double>& dt, const std::vector<double>& r) {
  if (dt.size() != r.size() || dt.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 points");
  const auto m = static_cast<double>(dt.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < dt.size(); ++i) {
    const double lx = std::log(dt[i]);
    const double ly = std::log(std::max(std::abs(r[i]), 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

namespace {

struct FieldPair {
  PotentialFn f;
  MapFn T;
};

FieldPair expansion_pair(const ExpansionInstance& inst, double dt) {
  PotentialFn f = [&inst, dt](const Matrix& x, const Matrix& y) {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Vector xi = x.row(i).transpose();
      out(i) = inst.phi.value(xi) * y(i, 0) + inst.psi.value(xi) * dt;
    }
    return out;
  };
  MapFn T = [&inst, dt](const Matrix& x, const Matrix& y) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Vector xi = x.row(i).transpose();
      out.row(i) = (xi + inst.kappa(xi) * y(i, 0) + inst.u(xi) * dt).transpose();
    }
    return out;
  };
  return {std::move(f), std::move(T)};
}

double quadrature_objective(const Ensemble& ens, const ExpansionInstance& inst, double dt, int nodes) {
  const auto [xi, wq] = gauss_hermite_normal(nodes);
  const Matrix& x = ens.particles();
  const Eigen::Index n = x.rows();
  const Vector hv = evaluate_h(x, inst.h);
  const FieldPair fp = expansion_pair(inst, dt);
  const double sdt = std::sqrt(dt);
  const auto dn = static_cast<double>(n);
  double total = 0.0;
  for (Eigen::Index q = 0; q < xi.size(); ++q) {
    const Vector s = (hv * dt).array() + sdt * xi(q);
    WeightedSamples joint{x, s, Vector::Constant(n, wq(q) / dn)};
    // Independent coupling: every x_bar_j against every increment s_i.
    WeightedSamples ind{Matrix(n * n, x.cols()), Matrix(n * n, 1), Vector::Constant(n * n, wq(q) / (dn * dn))};
    for (Eigen::Index i = 0; i < n; ++i) {
      ind.x.middleRows(i * n, n) = x;
      ind.y.middleRows(i * n, n).setConstant(s(i));
    }
    total += coupling_objective(fp.f, fp.T, joint, ind);
  }
  return total;
}

double monte_carlo_objective(const Ensemble& ens, const ExpansionInstance& inst, double dt, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  const Matrix& x = ens.particles();
  const Vector hv = evaluate_h(x, inst.h);
  JointSamples js{x, Matrix(x.rows(), 1)};
  const double sdt = std::sqrt(dt);
  for (Eigen::Index i = 0; i < x.rows(); ++i) js.y(i, 0) = hv(i) * dt + sdt * standard_normal(rng);
  const PairedBatch batch = make_paired_batch(js, rng);
  const FieldPair fp = expansion_pair(inst, dt);
  return empirical_objective(fp.f, fp.T, batch);
}

}  // namespace

ExpansionReport verify_expansion(const Ensemble& ens, const ExpansionInstance& inst, const std::vector<double>& dt_list,
                                 const VerifyOptions& options) {
  if (dt_list.size() < 2) throw std::invalid_argument("verify_expansion: need at least two dt values");
  for (std::size_t i = 0; i < dt_list.size(); ++i) {
    if (!(dt_list[i] > 0.0) || (i > 0 && !(dt_list[i] < dt_list[i - 1]))) {
      throw std::invalid_argument("verify_expansion: dt_list must be positive and decreasing");
    }
  }
  ExpansionReport rep;
  const double h_hat = evaluate_h(ens.particles(), inst.h).mean();
  rep.terms = expansion_terms(inst.phi, inst.psi, inst.kappa, inst.u, ens, inst.h, h_hat, options.form);
  for (std::size_t k = 0; k < dt_list.size(); ++k) {
    const double dt = dt_list[k];
    const double j = options.sampling == ExpansionSampling::quadrature
                         ? quadrature_objective(ens, inst, dt, options.quadrature_nodes)
                         : monte_carlo_objective(ens, inst, dt, derive_seed(options.seed, {k}));
    double r = j - rep.terms.J1 * dt;
    if (options.include_j2) r -= rep.terms.J2 * dt * dt;
    rep.dt.push_back(dt);
    rep.objective.push_back(j);
    rep.residual.push_back(r);
  }
  rep.slope = loglog_slope(rep.dt, rep.residual);
  return rep;
}

Matrix minimize_j1_polynomial(const Ensemble& ens, const VectorField& grad_phi, int degree) {
  if (degree < 0) throw std::invalid_argument("minimize_j1_polynomial: degree must be >= 0");
  const Matrix& x = ens.particles();
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Vector mu = column_mean(x);
  Vector sd = (x.rowwise() - mu.transpose()).colwise().norm().transpose() / std::sqrt(static_cast<double>(n));
  for (Eigen::Index k = 0; k < d; ++k) {
    if (!(sd(k) > 0.0)) sd(k) = 1.0;
  }
  Matrix basis(n, 1 + d * degree);
  basis.col(0).setOnes();
  for (Eigen::Index k = 0; k < d; ++k) {
    const Vector z = ((x.col(k).array() - mu(k)) / sd(k)).matrix();
    Vector p = Vector::Ones(n);
    for (int e = 1; e <= degree; ++e) {
      p = p.cwiseProduct(z);
      basis.col(1 + k * degree + (e - 1)) = p;
    }
  }
  Matrix target(n, d);
  for (Eigen::Index i = 0; i < n; ++i) target.row(i) = grad_phi(x.row(i).transpose()).transpose();
  // J1 in kappa is mean 1/2|kappa|^2 - kappa . grad phi + const: a least-squares fit of grad phi.
  const Matrix coef = basis.colPivHouseholderQr().solve(target);
  return basis * coef;
}

}  // namespace otbayes

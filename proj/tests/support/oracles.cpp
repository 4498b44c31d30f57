#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

std::pair<Vector, Matrix> gaussian_posterior(const Vector& m0, const Matrix& S0, const Matrix& H, const Matrix& R,
                                             const Vector& y) {
  const Matrix S0i = S0.inverse();
  const Matrix Ri = R.inverse();
  const Matrix S = (S0i + H.transpose() * Ri * H).inverse();
  const Vector m = S * (S0i * m0 + H.transpose() * Ri * y);
  return {m, S};
}

double squared_log_density(double x, double y, double lambda, double c) {
  const double r = y - c * x * x;
  return -0.5 * x * x - 0.5 * r * r / (lambda * lambda);
}

double squared_positive_mode(double y, double lambda, double c) {
  double lo = 0.0, hi = 6.0;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200; ++it) {
    const double a = hi - g * (hi - lo);
    const double b = lo + g * (hi - lo);
    if (squared_log_density(a, y, lambda, c) > squared_log_density(b, y, lambda, c)) {
      hi = b;
    } else {
      lo = a;
    }
  }
  return 0.5 * (lo + hi);
}

double squared_positive_half_mean(double y, double lambda, double c) {
  const int n = 200000;
  const double hi = 8.0, dx = hi / n;
  double mass = 0.0, first = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = i * dx;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    const double p = std::exp(squared_log_density(x, y, lambda, c));
    mass += w * p;
    first += w * x * p;
  }
  return first / mass;
}

double mmd_naive(const Matrix& a, const Matrix& b, double h) {
  auto k = [h](const auto& u, const auto& v) { return std::exp(-(u - v).squaredNorm() / (2.0 * h * h)); };
  const auto n = a.rows(), m = b.rows();
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) xx += k(a.row(i), a.row(j));
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (i != j) yy += k(b.row(i), b.row(j));
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) xy += k(a.row(i), b.row(j));
  }
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  return xx / (dn * (dn - 1.0)) + yy / (dm * (dm - 1.0)) - 2.0 * xy / (dn * dm);
}

double median_distance(const Matrix& a, const Matrix& b) {
  Matrix pool(a.rows() + b.rows(), a.cols());
  pool << a, b;
  std::vector<double> d;
  for (Eigen::Index i = 0; i < pool.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < pool.rows(); ++j) d.push_back((pool.row(i) - pool.row(j)).norm());
  }
  std::sort(d.begin(), d.end());
  const std::size_t n = d.size();
  return n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
}

std::vector<double> grid_filter_squared(const std::vector<double>& ys, double a, double q, double c, double r,
                                        double lo, double hi, int points) {
  const double dx = (hi - lo) / (points - 1);
  Vector x(points), p(points);
  for (int i = 0; i < points; ++i) {
    x(i) = lo + i * dx;
    p(i) = std::exp(-0.5 * x(i) * x(i));
  }
  p /= p.sum();
  std::vector<double> means;
  for (double y : ys) {
    // Chapman-Kolmogorov with the Gaussian transition kernel.
    Vector pred = Vector::Zero(points);
    for (int j = 0; j < points; ++j) {
      for (int i = 0; i < points; ++i) {
        const double d = x(j) - a * x(i);
        pred(j) += p(i) * std::exp(-0.5 * d * d / q);
      }
    }
    for (int j = 0; j < points; ++j) {
      const double e = y - c * x(j) * x(j);
      pred(j) *= std::exp(-0.5 * e * e / r);
    }
    p = pred / pred.sum();
    means.push_back(p.dot(x.cwiseProduct(x)));
  }
  return means;
}

double poisson_gain_1d(const std::function<double(double)>& density, const std::function<double(double)>& h,
                       double h_hat, double x, double lo, int points) {
  const double dx = (x - lo) / (points - 1);
  double acc = 0.0;
  for (int i = 0; i < points; ++i) {
    const double s = lo + i * dx;
    const double w = (i == 0 || i == points - 1) ? 0.5 : 1.0;
    acc += w * (h_hat - h(s)) * density(s);
  }
  return acc * dx / density(x);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& r) {
  const std::size_t n = x.size();
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]), ly = std::log(r[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

}  // namespace oracle

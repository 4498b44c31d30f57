#include "otbayes/metrics.hpp"

#include "otbayes/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace otbayes {

namespace {

Matrix thin(const Matrix& m, Eigen::Index max_points) {
  if (m.rows() <= max_points) return m;
  Matrix out(max_points, m.cols());
  for (Eigen::Index i = 0; i < max_points; ++i) out.row(i) = m.row(i * m.rows() / max_points);
  return out;
}

Matrix squared_distances(const Matrix& a, const Matrix& b) {
  const Vector na = a.rowwise().squaredNorm();
  const Vector nb = b.rowwise().squaredNorm();
  Matrix d = -2.0 * a * b.transpose();
  d.colwise() += na;
  d.rowwise() += nb.transpose();
  return d.cwiseMax(0.0);
}

Matrix gaussian_kernel(const Matrix& a, const Matrix& b, double h) {
  return (squared_distances(a, b).array() * (-0.5 / (h * h))).exp().matrix();
}

// Orders the pair so mmd(a, b) and mmd(b, a) run the identical computation.
bool canonical_first(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

double u_statistic(double sum_aa, double sum_bb, double sum_ab, Eigen::Index n, Eigen::Index m) {
  const auto dn = static_cast<double>(n);
  const auto dm = static_cast<double>(m);
  return sum_aa / (dn * (dn - 1.0)) + sum_bb / (dm * (dm - 1.0)) - 2.0 * sum_ab / (dn * dm);
}

double off_diagonal_sum(const Matrix& k) { return k.sum() - k.diagonal().sum(); }

void check_inputs(const Matrix& a, const Matrix& b) {
  if (a.rows() < 2 || b.rows() < 2) throw std::invalid_argument("mmd: each sample needs at least 2 points");
  if (a.cols() != b.cols()) throw std::invalid_argument("mmd: dimension mismatch");
}

}  // namespace

double median_bandwidth(const Matrix& a, const Matrix& b, Eigen::Index max_points) {
  Matrix pooled(a.rows() + b.rows(), a.cols());
  pooled << a, b;
  const Matrix p = thin(pooled, max_points);
  const Matrix d = squared_distances(p, p);
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(p.rows() * (p.rows() - 1) / 2));
  for (Eigen::Index j = 0; j < p.rows(); ++j) {
    for (Eigen::Index i = j + 1; i < p.rows(); ++i) dist.push_back(std::sqrt(d(i, j)));
  }
  if (dist.empty()) return 1.0;
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  return *mid > 0.0 ? *mid : 1.0;
}

double mmd(const Matrix& a, const Matrix& b, std::optional<double> bandwidth) {
  check_inputs(a, b);
  if (!canonical_first(a, b) && canonical_first(b, a)) return mmd(b, a, bandwidth);
  const double h = bandwidth ? *bandwidth : median_bandwidth(a, b);
  if (!(h > 0.0)) throw std::invalid_argument("mmd: bandwidth must be positive");
  const double saa = off_diagonal_sum(gaussian_kernel(a, a, h));
  const double sbb = off_diagonal_sum(gaussian_kernel(b, b, h));
  const double sab = gaussian_kernel(a, b, h).sum();
  return u_statistic(saa, sbb, sab, a.rows(), b.rows());
}

double mmd(const Ensemble& a, const Ensemble& b, std::optional<double> bandwidth) {
  return mmd(a.particles(), b.particles(), bandwidth);
}

double PermutationNull::null_mean() const {
  if (null_samples.empty()) return 0.0;
  return std::accumulate(null_samples.begin(), null_samples.end(), 0.0) / static_cast<double>(null_samples.size());
}

double PermutationNull::null_std() const {
  if (null_samples.size() < 2) return 0.0;
  const double m = null_mean();
  double s = 0.0;
  for (double v : null_samples) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(null_samples.size() - 1));
}

double PermutationNull::abs_quantile(double q) const {
  if (null_samples.empty()) throw std::logic_error("permutation null is empty");
  std::vector<double> v(null_samples.size());
  std::transform(null_samples.begin(), null_samples.end(), v.begin(), [](double x) { return std::abs(x); });
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
  return v[std::min(idx, v.size() - 1)];
}

PermutationNull mmd_permutation_null(const Matrix& a, const Matrix& b, int permutations, Rng& rng,
                                     std::optional<double> bandwidth) {
  check_inputs(a, b);
  PermutationNull out;
  out.bandwidth = bandwidth ? *bandwidth : median_bandwidth(a, b);
  out.statistic = mmd(a, b, out.bandwidth);

  Matrix pooled(a.rows() + b.rows(), a.cols());
  pooled << a, b;
  const Matrix k = gaussian_kernel(pooled, pooled, out.bandwidth);
  const Eigen::Index total = pooled.rows();
  const Eigen::Index n = a.rows();

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(total));
  std::vector<char> in_a(static_cast<std::size_t>(total));
  out.null_samples.reserve(static_cast<std::size_t>(std::max(permutations, 0)));
  for (int r = 0; r < permutations; ++r) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    // Partial Fisher-Yates: the first n slots become the relabeled sample a.
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto span = static_cast<double>(total - i);
      auto j = i + static_cast<Eigen::Index>(uniform01(rng) * span);
      j = std::min(j, total - 1);
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    std::fill(in_a.begin(), in_a.end(), 0);
    for (Eigen::Index i = 0; i < n; ++i) in_a[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = 1;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (Eigen::Index j = 0; j < total; ++j) {
      const bool ja = in_a[static_cast<std::size_t>(j)] != 0;
      for (Eigen::Index i = 0; i < total; ++i) {
        if (i == j) continue;
        const bool ia = in_a[static_cast<std::size_t>(i)] != 0;
        const double v = k(i, j);
        if (ia && ja) saa += v;
        else if (!ia && !ja) sbb += v;
        else sab += v;
      }
    }
    out.null_samples.push_back(u_statistic(saa, sbb, 0.5 * sab, n, total - n));
  }
  return out;
}

double mse(const std::vector<Vector>& ens_means, const std::vector<Vector>& truth) {
  if (ens_means.size() != truth.size()) throw std::invalid_argument("mse: length mismatch");
  if (ens_means.empty()) throw std::invalid_argument("mse: empty input");
  double s = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (ens_means[t].size() != truth[t].size()) throw std::invalid_argument("mse: dimension mismatch");
    s += (ens_means[t] - truth[t]).squaredNorm();
  }
  return s / static_cast<double>(truth.size());
}

}  // namespace otbayes

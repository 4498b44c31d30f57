#pragma once

#include "otbayes/ensemble.hpp"
#include "otbayes/types.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace otbayes {

struct MetricReport {
  std::size_t step = 0;
  double mmd = 0.0;
  double mse = 0.0;
  double ess = 0.0;
  double wall_seconds = 0.0;
};

/// Median pairwise Euclidean distance of the pooled rows of a and b. Pools
/// larger than max_points are thinned by a fixed stride first.
double median_bandwidth(const Matrix& a, const Matrix& b, Eigen::Index max_points = 2000);

/// Unbiased squared MMD with the Gaussian kernel exp(-|d|^2 / (2 h^2)).
/// Without a bandwidth the median heuristic on the pooled sample is used.
/// Exactly symmetric in its arguments.
double mmd(const Matrix& a, const Matrix& b, std::optional<double> bandwidth = std::nullopt);
double mmd(const Ensemble& a, const Ensemble& b, std::optional<double> bandwidth = std::nullopt);

struct PermutationNull {
  double statistic = 0.0;
  double bandwidth = 0.0;
  std::vector<double> null_samples;

  double null_mean() const;
  double null_std() const;
  /// Empirical q-quantile of |null|.
  double abs_quantile(double q) const;
};

/// Observed MMD together with its permutation null (pool, relabel, recompute).
PermutationNull mmd_permutation_null(const Matrix& a, const Matrix& b, int permutations, Rng& rng,
                                     std::optional<double> bandwidth = std::nullopt);

/// Time average of |mean_t - truth_t|^2.
double mse(const std::vector<Vector>& ens_means, const std::vector<Vector>& truth);

}  // namespace otbayes

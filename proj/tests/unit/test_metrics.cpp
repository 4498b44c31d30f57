#include "otbayes/metrics.hpp"
#include "otbayes/random.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace otbayes;

namespace {

Matrix normal_sample(Eigen::Index n, Eigen::Index d, double shift, Rng& rng) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng) + shift;
  return m;
}

}  // namespace

TEST_CASE("MMD agrees with the brute-force U-statistic") {
  Rng rng = make_rng(1);
  const Matrix a = normal_sample(40, 2, 0.0, rng);
  const Matrix b = normal_sample(55, 2, 0.5, rng);
  CHECK(mmd(a, b, 0.8) == doctest::Approx(oracle::mmd_naive(a, b, 0.8)).epsilon(1e-10));
  CHECK(median_bandwidth(a, b) == doctest::Approx(oracle::median_distance(a, b)).epsilon(1e-12));
  CHECK(mmd(a, b) == doctest::Approx(oracle::mmd_naive(a, b, oracle::median_distance(a, b))).epsilon(1e-10));
}

TEST_CASE("MMD is exactly symmetric") {
  Rng rng = make_rng(2);
  const Matrix a = normal_sample(300, 3, 0.0, rng);
  const Matrix b = normal_sample(200, 3, 0.2, rng);
  CHECK(mmd(a, b) == mmd(b, a));
}

TEST_CASE("MMD separates shifted distributions and is near zero for equal ones") {
  Rng rng = make_rng(3);
  const Matrix a = normal_sample(1000, 1, 0.0, rng);
  const Matrix same = normal_sample(1000, 1, 0.0, rng);
  const Matrix shifted = normal_sample(1000, 1, 1.0, rng);
  const PermutationNull null = mmd_permutation_null(a, same, 100, rng);
  CHECK(std::abs(null.statistic) < null.abs_quantile(0.99) + 1e-12);
  CHECK(std::abs(null.null_mean()) < 3.0 * null.null_std());
  CHECK(mmd(a, shifted) > 10.0 * null.abs_quantile(0.99));
}

TEST_CASE("MMD of ensembles uses the particles") {
  Rng rng = make_rng(4);
  const Matrix a = normal_sample(30, 1, 0.0, rng), b = normal_sample(30, 1, 0.0, rng);
  CHECK(mmd(Ensemble(a), Ensemble(b), 1.0) == mmd(a, b, 1.0));
}

TEST_CASE("mse is the time-averaged squared error") {
  const std::vector<Vector> m = {Vector::Constant(2, 1.0), Vector::Constant(2, 0.0)};
  const std::vector<Vector> t = {Vector::Constant(2, 0.0), Vector::Constant(2, 0.0)};
  CHECK(mse(m, t) == doctest::Approx(1.0));
  CHECK_THROWS(mse(m, {Vector::Zero(2)}));
}

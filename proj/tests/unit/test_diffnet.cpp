#include "otbayes/diffnet/adam.hpp"
#include "otbayes/diffnet/network.hpp"
#include "otbayes/diffnet/tape.hpp"
#include "otbayes/random.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace otbayes;
using namespace otbayes::diffnet;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return m;
}

Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }
Matrix unflatten(const Vector& v, Eigen::Index r, Eigen::Index c) { return Eigen::Map<const Matrix>(v.data(), r, c); }

// Checks d(builder(X))/dX on the tape against central differences.
void check_unary(const std::function<Var(Tape&, Var)>& builder, const Matrix& x0) {
  auto f = [&](const Vector& v) {
    Tape t;
    const Var x = t.input(unflatten(v, x0.rows(), x0.cols()));
    return t.scalar(t.sum(builder(t, x)));
  };
  Tape t;
  const Var x = t.input(x0);
  const Var out = t.sum(builder(t, x));
  t.backward(out);
  const Vector g = flatten(t.adjoint(x));
  const Vector fd = oracle::fd_gradient(f, flatten(x0));
  CHECK((g - fd).lpNorm<Eigen::Infinity>() < 1e-6);
}

double relative_error(const Vector& a, const Vector& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a(i)), std::abs(b(i)), 1e-3});
    worst = std::max(worst, std::abs(a(i) - b(i)) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("tape primitives match finite differences") {
  Rng rng = make_rng(7);
  const Matrix x0 = random_matrix(3, 4, rng);
  const Matrix w = random_matrix(2, 3, rng);
  const Matrix b = random_matrix(2, 1, rng);
  const Matrix other = random_matrix(3, 4, rng);

  check_unary([&](Tape& t, Var x) { return t.affine(t.constant(w), t.constant(b), x); }, x0);
  check_unary([](Tape& t, Var x) { return t.tanh(x); }, x0);
  check_unary([](Tape& t, Var x) { return t.relu(x); }, x0);
  check_unary([&](Tape& t, Var x) { return t.mul(x, t.constant(other)); }, x0);
  check_unary([&](Tape& t, Var x) { return t.sub(t.square(x), t.constant(other)); }, x0);
  check_unary([](Tape& t, Var x) { return t.scale(t.add(x, x), -0.7); }, x0);
  check_unary([](Tape& t, Var x) { return t.square(t.col_sum(x)); }, x0);
  check_unary([](Tape& t, Var x) { return t.square(t.mean(x)); }, x0);
  check_unary([](Tape& t, Var x) { return t.square(t.concat_rows(t.slice_rows(x, 1, 2), x)); }, x0);
}

TEST_CASE("weights of an affine node get w-gradient x^T and bias row sums") {
  Rng rng = make_rng(3);
  const Matrix x = random_matrix(3, 5, rng);
  Tape t;
  const Var w = t.parameter(random_matrix(2, 3, rng), 0, 0);
  const Var b = t.parameter(Matrix::Zero(2, 1), 0, 6);
  t.backward(t.sum(t.affine(w, b, t.constant(x))));
  const Matrix expected_w = Matrix::Ones(2, 5) * x.transpose();
  CHECK((t.adjoint(w) - expected_w).norm() < 1e-12);
  CHECK((t.adjoint(b) - Matrix::Constant(2, 1, 5.0)).norm() < 1e-12);
  const Vector flat = t.gradient(0, 8);
  CHECK(flat.head(6).isApprox(flatten(expected_w)));
}

TEST_CASE("apply dispatches by name and rejects unknown primitives") {
  Tape t;
  const Var x = t.input(Matrix::Constant(2, 2, -1.0));
  const Var args[] = {x};
  const Var r = t.apply("relu", args);
  CHECK(t.value(r).isZero());
  const Var s = t.apply("scale", args, 3.0);
  CHECK(t.value(s)(0, 0) == doctest::Approx(-3.0));
  const Eigen::Index extra[] = {1, 1};
  CHECK(t.value(t.apply("slice_rows", args, 0.0, extra)).rows() == 1);
  CHECK_THROWS_AS(t.apply("softmax", args), UnsupportedPrimitive);
}

TEST_CASE("backward needs a scalar output") {
  Tape t;
  const Var x = t.input(Matrix::Ones(2, 2));
  CHECK_THROWS(t.backward(x));
}

TEST_CASE("parameter count matches the initialized vector") {
  for (int blocks = 1; blocks <= 3; ++blocks) {
    ArchitectureSpec s;
    s.input_dim = 3;
    s.output_dim = 2;
    s.hidden_width = 5;
    s.num_residual_blocks = static_cast<std::size_t>(blocks);
    const NetworkParams p = init_params(s, 11);
    CHECK(static_cast<std::size_t>(p.values.size()) == s.parameter_count());
    CHECK_NOTHROW(p.validate());
  }
}

TEST_CASE("init_params is deterministic in the seed") {
  ArchitectureSpec s;
  s.input_dim = 2;
  s.hidden_width = 4;
  CHECK(init_params(s, 5).values == init_params(s, 5).values);
  CHECK(init_params(s, 5).values != init_params(s, 6).values);
}

TEST_CASE("validate rejects a parameter vector of the wrong length") {
  ArchitectureSpec s;
  s.input_dim = 2;
  NetworkParams p = init_params(s, 1);
  p.values.conservativeResize(p.values.size() - 1);
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  CHECK_THROWS(forward(p, Vector::Zero(2)));
}

TEST_CASE("network parameter gradients match finite differences") {
  Rng rng = make_rng(21);
  for (auto act : {Activation::tanh, Activation::relu}) {
    for (bool enkf : {false, true}) {
      ArchitectureSpec s;
      s.input_dim = 3;
      s.output_dim = enkf ? 2 : 1;
      s.hidden_width = 6;
      s.num_residual_blocks = 2;
      s.activation = act;
      s.has_enkf_block = enkf;
      NetworkParams p = init_params(s, 3);
      if (enkf) {
        p.enkf = EnkfBlock::estimate(random_matrix(50, 2, rng), random_matrix(50, 1, rng));
      }
      const Matrix batch = random_matrix(3, 7, rng);
      const LossBuilder loss = [](Tape& t, const BoundNetwork& net, Var x) {
        return t.mean(t.square(net.apply(t, x)));
      };
      const Vector g = gradient(loss, p, batch);
      auto f = [&](const Vector& v) {
        NetworkParams q = p;
        q.values = v;
        return forward_batch(q, batch).array().square().mean();
      };
      CHECK(relative_error(g, oracle::fd_gradient(f, p.values)) < 1e-5);
    }
  }
}

TEST_CASE("input jacobian matches finite differences") {
  ArchitectureSpec s;
  s.input_dim = 3;
  s.output_dim = 2;
  s.hidden_width = 8;
  s.activation = Activation::tanh;
  s.has_enkf_block = true;
  const NetworkParams p = init_params(s, 9);
  const Vector x = (Vector(3) << 0.3, -0.2, 1.1).finished();
  const Matrix jac = input_jacobian(p, x);
  for (int k = 0; k < 2; ++k) {
    auto f = [&](const Vector& v) { return forward(p, v)(k); };
    CHECK((jac.row(k).transpose() - oracle::fd_gradient(f, x)).norm() < 1e-6);
  }
}

TEST_CASE("a fresh map network with an identity EnKF block starts at T(x, y) = x") {
  ArchitectureSpec s;
  s.input_dim = 3;
  s.output_dim = 2;
  s.has_enkf_block = true;
  NetworkParams p = init_params(s, 2);
  p.enkf = EnkfBlock::identity(2, 1);
  const Vector in = (Vector(3) << 0.5, -1.5, 2.0).finished();
  CHECK(forward(p, in).isApprox(in.head(2), 1e-12));
}

TEST_CASE("EnKF block estimate recovers the regression gain") {
  Rng rng = make_rng(4);
  const Eigen::Index n = 20000;
  Matrix x(n, 1), y(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = standard_normal(rng);
    y(i, 0) = 2.0 * x(i, 0) + standard_normal(rng);
  }
  const EnkfBlock blk = EnkfBlock::estimate(x, y);
  const double cxy = ((x.array() - x.mean()) * (y.array() - y.mean())).sum() / (n - 1);
  const double cyy = (y.array() - y.mean()).square().sum() / (n - 1);
  CHECK(blk.gain(0, 0) == doctest::Approx(cxy / cyy).epsilon(1e-9));
  CHECK(blk.gain(0, 0) == doctest::Approx(0.4).epsilon(0.05));
  const auto [A, c] = blk.as_affine();
  const Vector z = (Vector(2) << 0.7, 1.3).finished();
  CHECK((A * z + c).isApprox(blk.apply(z.head(1), z.tail(1)), 1e-12));
}

TEST_CASE("first Adam step moves each coordinate by lr in the gradient direction") {
  Vector v = (Vector(3) << 1.0, 2.0, 3.0).finished();
  const Vector g = (Vector(3) << 0.5, -2.0, 1e-3).finished();
  AdamState st = AdamState::for_size(3, 0.1);
  const Vector start = v;
  adam_update(v, g, st, Direction::descend);
  for (int i = 0; i < 3; ++i) {
    const double expected = start(i) - 0.1 * g(i) / (std::abs(g(i)) + 1e-8);
    CHECK(v(i) == doctest::Approx(expected).epsilon(1e-12));
  }
  Vector u = start;
  AdamState st2 = AdamState::for_size(3, 0.1);
  adam_update(u, g, st2, Direction::ascend);
  CHECK((u - start).isApprox(-(v - start), 1e-12));
}

TEST_CASE("Adam finds the minimizer of a quadratic") {
  const Vector target = (Vector(2) << 1.5, -0.5).finished();
  Vector v = Vector::Zero(2);
  AdamState st = AdamState::for_size(2, 0.05);
  for (int i = 0; i < 2000; ++i) adam_update(v, 2.0 * (v - target), st, Direction::descend);
  CHECK((v - target).norm() < 1e-3);
}

TEST_CASE("adam_step is the functional form of adam_update") {
  ArchitectureSpec s;
  s.input_dim = 1;
  s.hidden_width = 3;
  const NetworkParams p = init_params(s, 1);
  const Vector g = Vector::Ones(p.values.size());
  const AdamState st = AdamState::for_size(p.values.size(), 0.01);
  const auto [q, st2] = adam_step(p, g, st, Direction::descend);
  Vector v = p.values;
  AdamState st3 = st;
  adam_update(v, g, st3, Direction::descend);
  CHECK(q.values == v);
  CHECK(st2.step == 1);
  CHECK(st.step == 0);
}

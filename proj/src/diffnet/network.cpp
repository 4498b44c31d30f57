#include "otbayes/diffnet/network.hpp"

#include "otbayes/ensemble.hpp"
#include "otbayes/random.hpp"

#include <cmath>
#include <stdexcept>

namespace otbayes::diffnet {

namespace {

struct DenseSlot {
  Eigen::Index rows;
  Eigen::Index cols;
  Eigen::Index offset;
};

// Order: input W, b; per block W1, b1, W2, b2; output W, b.
std::vector<DenseSlot> layout(const ArchitectureSpec& s) {
  const auto in = static_cast<Eigen::Index>(s.input_dim);
  const auto out = static_cast<Eigen::Index>(s.output_dim);
  const auto w = static_cast<Eigen::Index>(s.hidden_width);
  std::vector<DenseSlot> slots;
  Eigen::Index off = 0;
  auto add = [&](Eigen::Index r, Eigen::Index c) {
    slots.push_back({r, c, off});
    off += r * c;
  };
  add(w, in);
  add(w, 1);
  for (std::size_t k = 0; k < s.num_residual_blocks; ++k) {
    add(w, w);
    add(w, 1);
    add(w, w);
    add(w, 1);
  }
  add(out, w);
  add(out, 1);
  return slots;
}

Matrix slot_matrix(const Vector& values, const DenseSlot& s) {
  return Eigen::Map<const Matrix>(values.data() + s.offset, s.rows, s.cols);
}

Matrix activate(Activation a, const Matrix& x) {
  if (a == Activation::relu) return x.cwiseMax(0.0);
  return x.array().tanh().matrix();
}

Var activate(Tape& t, Activation a, Var x) {
  return a == Activation::relu ? t.relu(x) : t.tanh(x);
}

}  // namespace

void ArchitectureSpec::validate() const {
  if (input_dim < 1 || output_dim < 1 || hidden_width < 1 || num_residual_blocks < 1) {
    throw std::invalid_argument("architecture counts must all be >= 1");
  }
  if (has_enkf_block && input_dim <= output_dim) {
    throw std::invalid_argument("an EnKF block needs input_dim = state_dim + obs_dim with obs_dim >= 1");
  }
}

std::size_t ArchitectureSpec::parameter_count() const {
  const std::size_t w = hidden_width;
  return w * input_dim + w + num_residual_blocks * (2 * w * w + 2 * w) + output_dim * w + output_dim;
}

EnkfBlock EnkfBlock::identity(std::size_t n, std::size_t m) {
  const auto ni = static_cast<Eigen::Index>(n);
  const auto mi = static_cast<Eigen::Index>(m);
  return {Matrix::Zero(ni, mi), Matrix::Zero(mi, ni), Vector::Zero(ni), Vector::Zero(mi)};
}

EnkfBlock EnkfBlock::estimate(const Matrix& states, const Matrix& observations) {
  if (states.rows() != observations.rows()) {
    throw std::invalid_argument("EnkfBlock::estimate: sample count mismatch");
  }
  const Matrix cxy = cross_covariance(states, observations);
  const Matrix cyy = cross_covariance(observations, observations);
  Matrix cxx = cross_covariance(states, states);

  EnkfBlock block;
  block.state_mean = column_mean(states);
  block.obs_mean = column_mean(observations);

  auto solve_spd = [](Matrix m, const Matrix& rhs) {
    Eigen::LDLT<Matrix> ldlt(m);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) {
      const double jitter = 1e-10 * std::max(m.trace() / static_cast<double>(m.rows()), 1e-300);
      m.diagonal().array() += jitter;
      ldlt.compute(m);
      if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) return Matrix(Matrix::Zero(rhs.rows(), rhs.cols()));
    }
    return Matrix(ldlt.solve(rhs));
  };
  // K = Cxy Cyy^-1 and H = Cyx Cxx^-1, both via symmetric solves.
  block.gain = solve_spd(cyy, cxy.transpose()).transpose();
  block.obs_jacobian = solve_spd(cxx, cxy).transpose();
  return block;
}

Vector EnkfBlock::apply(const Vector& x, const Vector& y) const {
  return x + gain * (y - (obs_mean + obs_jacobian * (x - state_mean)));
}

std::pair<Matrix, Vector> EnkfBlock::as_affine() const {
  const Eigen::Index n = gain.rows();
  const Eigen::Index m = gain.cols();
  Matrix a(n, n + m);
  a.leftCols(n) = Matrix::Identity(n, n) - gain * obs_jacobian;
  a.rightCols(m) = gain;
  Vector c = gain * (obs_jacobian * state_mean - obs_mean);
  return {a, c};
}

Normalization Normalization::identity(std::size_t input_dim, std::size_t output_dim) {
  return {Vector::Zero(static_cast<Eigen::Index>(input_dim)), Vector::Ones(static_cast<Eigen::Index>(input_dim)),
          Vector::Ones(static_cast<Eigen::Index>(output_dim))};
}

void NetworkParams::validate() const {
  spec.validate();
  if (static_cast<std::size_t>(values.size()) != spec.parameter_count()) {
    throw std::invalid_argument("network values length does not match the architecture");
  }
  if (!values.allFinite()) throw std::invalid_argument("network values must be finite");
  if (normalization.input_shift.size() != static_cast<Eigen::Index>(spec.input_dim) ||
      normalization.input_scale.size() != static_cast<Eigen::Index>(spec.input_dim) ||
      normalization.output_scale.size() != static_cast<Eigen::Index>(spec.output_dim)) {
    throw std::invalid_argument("network normalization has the wrong dimensions");
  }
  if ((normalization.input_scale.array() <= 0.0).any()) {
    throw std::invalid_argument("network input scale must be positive");
  }
  if (enkf) {
    const auto n = static_cast<Eigen::Index>(spec.state_dim());
    const auto m = static_cast<Eigen::Index>(spec.obs_dim());
    if (!spec.has_enkf_block) throw std::invalid_argument("EnKF gain given for a network without an EnKF block");
    if (enkf->gain.rows() != n || enkf->gain.cols() != m || enkf->obs_jacobian.rows() != m ||
        enkf->obs_jacobian.cols() != n || enkf->state_mean.size() != n || enkf->obs_mean.size() != m) {
      throw std::invalid_argument("EnKF block has the wrong dimensions");
    }
  }
}

NetworkParams init_params(const ArchitectureSpec& spec, std::uint64_t seed) {
  spec.validate();
  NetworkParams p;
  p.spec = spec;
  p.values = Vector::Zero(static_cast<Eigen::Index>(spec.parameter_count()));
  p.normalization = Normalization::identity(spec.input_dim, spec.output_dim);
  if (spec.has_enkf_block) p.enkf = EnkfBlock::identity(spec.state_dim(), spec.obs_dim());

  Rng rng = make_rng(seed);
  const auto slots = layout(spec);
  const double gain = spec.activation == Activation::relu ? 2.0 : 1.0;
  for (std::size_t k = 0; k < slots.size(); k += 2) {
    const DenseSlot& w = slots[k];
    const bool output_layer = k + 2 == slots.size();
    if (output_layer && spec.has_enkf_block) continue;  // residual starts at zero
    // Second layer of each residual block is damped so blocks start near identity.
    const bool block_tail = !output_layer && k >= 2 && ((k - 2) / 2) % 2 == 1;
    double stddev = std::sqrt(gain / static_cast<double>(w.cols));
    if (block_tail) stddev *= 0.1;
    if (output_layer) stddev = std::sqrt(1.0 / static_cast<double>(w.cols));
    for (Eigen::Index i = 0; i < w.rows * w.cols; ++i) p.values(w.offset + i) = stddev * standard_normal(rng);
  }
  return p;
}

Matrix forward_batch(const NetworkParams& params, const Matrix& inputs) {
  const ArchitectureSpec& s = params.spec;
  if (inputs.rows() != static_cast<Eigen::Index>(s.input_dim)) {
    throw std::invalid_argument("forward: input dimension mismatch");
  }
  if (static_cast<std::size_t>(params.values.size()) != s.parameter_count()) {
    throw std::invalid_argument("forward: parameter vector does not match the architecture");
  }
  const auto slots = layout(s);
  const Normalization& nz = params.normalization;

  Matrix z;
  Matrix net_in;
  if (s.has_enkf_block) {
    const EnkfBlock block = params.enkf ? *params.enkf : EnkfBlock::identity(s.state_dim(), s.obs_dim());
    const auto [a, c] = block.as_affine();
    z = a * inputs;
    z.colwise() += c;
    net_in.resize(inputs.rows(), inputs.cols());
    net_in << z, inputs.bottomRows(static_cast<Eigen::Index>(s.obs_dim()));
  } else {
    net_in = inputs;
  }

  const Vector inv_scale = nz.input_scale.cwiseInverse();
  Matrix h = inv_scale.asDiagonal() * net_in;
  h.colwise() += Vector(-nz.input_shift.cwiseProduct(inv_scale));

  auto dense = [&](std::size_t k, const Matrix& x) {
    Matrix y = slot_matrix(params.values, slots[k]) * x;
    y.colwise() += slot_matrix(params.values, slots[k + 1]).col(0);
    return y;
  };
  h = activate(s.activation, dense(0, h));
  for (std::size_t b = 0; b < s.num_residual_blocks; ++b) {
    const std::size_t k = 2 + 4 * b;
    const Matrix t = activate(s.activation, dense(k, h));
    h = h + dense(k + 2, t);
  }
  Matrix out = nz.output_scale.asDiagonal() * dense(slots.size() - 2, h);
  if (s.has_enkf_block) out = z + out;
  return out;
}

Vector forward(const NetworkParams& params, const Vector& input) {
  return forward_batch(params, input).col(0);
}

BoundNetwork::BoundNetwork(Tape& tape, const NetworkParams& params, int group) : params_(&params) {
  bind(tape, group, true);
}

BoundNetwork BoundNetwork::frozen(Tape& tape, const NetworkParams& params) {
  BoundNetwork net;
  net.params_ = &params;
  net.bind(tape, -1, false);
  return net;
}

void BoundNetwork::bind(Tape& tape, int group, bool trainable) {
  const NetworkParams& p = *params_;
  p.spec.validate();
  if (static_cast<std::size_t>(p.values.size()) != p.spec.parameter_count()) {
    throw std::invalid_argument("bind: parameter vector does not match the architecture");
  }
  for (const DenseSlot& slot : layout(p.spec)) {
    Matrix m = slot_matrix(p.values, slot);
    leaves_.push_back(trainable ? tape.parameter(std::move(m), group, slot.offset) : tape.constant(std::move(m)));
  }
  const Normalization& nz = p.normalization;
  const Vector inv_scale = nz.input_scale.cwiseInverse();
  norm_scale_ = tape.constant(Matrix(inv_scale.asDiagonal()));
  norm_shift_ = tape.constant(Matrix(-nz.input_shift.cwiseProduct(inv_scale)));
  out_scale_ = tape.constant(Matrix(nz.output_scale.asDiagonal()));
  out_zero_ = tape.constant(Matrix::Zero(static_cast<Eigen::Index>(p.spec.output_dim), 1));
  if (p.spec.has_enkf_block) {
    const EnkfBlock block = p.enkf ? *p.enkf : EnkfBlock::identity(p.spec.state_dim(), p.spec.obs_dim());
    auto [a, c] = block.as_affine();
    enkf_matrix_ = tape.constant(std::move(a));
    enkf_offset_ = tape.constant(Matrix(c));
  }
}

Var BoundNetwork::apply(Tape& tape, Var input) const {
  const ArchitectureSpec& s = params_->spec;
  if (tape.value(input).rows() != static_cast<Eigen::Index>(s.input_dim)) {
    throw std::invalid_argument("forward: input dimension mismatch");
  }
  Var z{};
  Var net_in = input;
  if (s.has_enkf_block) {
    z = tape.affine(enkf_matrix_, enkf_offset_, input);
    const auto n = static_cast<Eigen::Index>(s.state_dim());
    const auto m = static_cast<Eigen::Index>(s.obs_dim());
    net_in = tape.concat_rows(z, tape.slice_rows(input, n, m));
  }
  Var h = tape.affine(norm_scale_, norm_shift_, net_in);
  h = activate(tape, s.activation, tape.affine(leaves_[0], leaves_[1], h));
  for (std::size_t b = 0; b < s.num_residual_blocks; ++b) {
    const std::size_t k = 2 + 4 * b;
    const Var t = activate(tape, s.activation, tape.affine(leaves_[k], leaves_[k + 1], h));
    h = tape.add(h, tape.affine(leaves_[k + 2], leaves_[k + 3], t));
  }
  const std::size_t last = leaves_.size() - 2;
  Var out = tape.affine(out_scale_, out_zero_, tape.affine(leaves_[last], leaves_[last + 1], h));
  if (s.has_enkf_block) out = tape.add(z, out);
  return out;
}

Vector gradient(const LossBuilder& loss, const NetworkParams& params, const Matrix& batch) {
  Tape tape;
  BoundNetwork net(tape, params, 0);
  const Var b = tape.constant(batch);
  const Var l = loss(tape, net, b);
  tape.backward(l);
  return tape.gradient(0, params.values.size());
}

Matrix input_jacobian(const NetworkParams& params, const Vector& input) {
  Tape tape;
  const BoundNetwork net = BoundNetwork::frozen(tape, params);
  const Var x = tape.input(input);
  const Var out = net.apply(tape, x);
  const auto rows = static_cast<Eigen::Index>(params.spec.output_dim);
  Matrix jac(rows, input.size());
  for (Eigen::Index j = 0; j < rows; ++j) {
    const Var component = tape.sum(tape.slice_rows(out, j, 1));
    tape.backward(component);
    jac.row(j) = tape.adjoint(x).col(0).transpose();
  }
  return jac;
}

}  // namespace otbayes::diffnet

#include "otbayes/ot_bayes.hpp"

#include "otbayes/metrics.hpp"
#include "otbayes/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace otbayes {

using diffnet::AdamState;
using diffnet::ArchitectureSpec;
using diffnet::BoundNetwork;
using diffnet::Direction;
using diffnet::NetworkParams;
using diffnet::Tape;
using diffnet::Var;

namespace {

Matrix stack_inputs(const Matrix& x, const Matrix& y) {
  Matrix z(x.cols() + y.cols(), x.rows());
  z << x.transpose(), y.transpose();
  return z;
}

Vector positive_std(const Matrix& rows) {
  const Matrix cov = cross_covariance(rows, rows);
  Vector s = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (!(s(i) > 1e-8)) s(i) = 1.0;
  }
  return s;
}

std::vector<Eigen::Index> partial_shuffle(Eigen::Index n, Eigen::Index k, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < k; ++i) {
    auto j = i + static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(n - i));
    j = std::min(j, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

Matrix gather_rows(const Matrix& m, const std::vector<Eigen::Index>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

// Minibatch of B joint rows with its own shuffle for the independent coupling.
PairedBatch draw_minibatch(const JointSamples& s, Eigen::Index b, Rng& rng) {
  const auto idx = partial_shuffle(s.size(), b, rng);
  PairedBatch batch;
  batch.x = gather_rows(s.x, idx);
  batch.y = gather_rows(s.y, idx);
  batch.x_bar = gather_rows(batch.x, uniform_permutation(b, rng));
  return batch;
}

struct TapeBatch {
  Matrix xy;     // joint inputs, features x batch
  Matrix xby;    // independent inputs
  Matrix yt;     // y, features x batch
  Matrix cost_target;
};

TapeBatch to_tape_layout(const PairedBatch& b, CostPairing pairing) {
  return {stack_inputs(b.x, b.y), stack_inputs(b.x_bar, b.y), b.y.transpose(),
          pairing == CostPairing::shuffled ? Matrix(b.x_bar.transpose()) : Matrix(b.x.transpose())};
}

// One descent step on T against the frozen f. Returns mean[1/2|T - P|^2 - f(T, y)].
double map_step(const Function& f, Function& T, const TapeBatch& tb, AdamState& state) {
  Tape tape;
  const auto fb = f.bind(tape, -1);
  const auto Tb = T.bind(tape, 0);
  const Var t = Tb(tape, tape.constant(tb.xby));
  const Var diff = tape.sub(t, tape.constant(tb.cost_target));
  const Var cost = tape.scale(tape.mean(tape.col_sum(tape.square(diff))), 0.5);
  const Var ft = tape.mean(fb(tape, tape.concat_rows(t, tape.constant(tb.yt))));
  const Var loss = tape.sub(cost, ft);
  const double value = tape.scalar(loss);
  if (!std::isfinite(value)) return value;
  tape.backward(loss);
  diffnet::adam_update(T.values(), tape.gradient(0, T.values().size()), state, Direction::descend);
  return value;
}

Vector row_values(const Matrix& m) { return m.row(0).transpose(); }

double weighted_mean(const Vector& v, const Vector* w) {
  if (w) return v.dot(*w);
  return v.mean();
}

}  // namespace

void JointSamples::validate() const {
  if (x.rows() != y.rows()) throw std::invalid_argument("joint samples: x and y row counts differ");
  if (x.rows() < 2) throw std::invalid_argument("joint samples: need at least 2 samples");
  if (x.cols() < 1 || y.cols() < 1) throw std::invalid_argument("joint samples: empty dimension");
}

std::vector<Eigen::Index> uniform_permutation(Eigen::Index n, Rng& rng) {
  return partial_shuffle(n, n, rng);
}

PairedBatch make_paired_batch(const JointSamples& samples, Rng& rng) {
  samples.validate();
  PairedBatch b;
  b.x = samples.x;
  b.y = samples.y;
  b.x_bar = gather_rows(samples.x, uniform_permutation(samples.size(), rng));
  return b;
}

void MapPair::validate() const {
  f.validate();
  T.validate();
  if (f.spec.output_dim != 1) throw std::invalid_argument("map pair: f must have scalar output");
  if (f.spec.input_dim != T.spec.input_dim) throw std::invalid_argument("map pair: f and T input dims differ");
  if (T.spec.output_dim >= T.spec.input_dim) throw std::invalid_argument("map pair: T input must be (x, y)");
}

// ---------------------------------------------------------------- functions

NetworkFunction::NetworkFunction(NetworkParams params) : params_(std::move(params)) { params_.validate(); }

Matrix NetworkFunction::evaluate(const Matrix& inputs) const { return diffnet::forward_batch(params_, inputs); }

Function::Applier NetworkFunction::bind(Tape& tape, int group) const {
  auto net = std::make_shared<BoundNetwork>(group >= 0 ? BoundNetwork(tape, params_, group)
                                                       : BoundNetwork::frozen(tape, params_));
  return [net](Tape& t, Var in) { return net->apply(t, in); };
}

std::unique_ptr<Function> NetworkFunction::clone() const { return std::make_unique<NetworkFunction>(*this); }

void NetworkFunction::fit_to_data(const JointSamples& samples, bool is_map) {
  samples.validate();
  const auto n = samples.x.cols();
  Matrix net_in(samples.size(), samples.x.cols() + samples.y.cols());
  if (params_.spec.has_enkf_block) {
    params_.enkf = diffnet::EnkfBlock::estimate(samples.x, samples.y);
    const auto [a, c] = params_.enkf->as_affine();
    Matrix z = a * stack_inputs(samples.x, samples.y);
    z.colwise() += c;
    net_in << z.transpose(), samples.y;
  } else {
    net_in << samples.x, samples.y;
  }
  diffnet::Normalization nz;
  nz.input_shift = column_mean(net_in);
  nz.input_scale = positive_std(net_in);
  const Vector sx = positive_std(samples.x);
  if (is_map) {
    nz.output_scale = sx;
  } else {
    nz.output_scale = Vector::Constant(1, sx.squaredNorm() / static_cast<double>(n));
  }
  params_.normalization = std::move(nz);
  params_.validate();
}

QuadraticPotential::QuadraticPotential(const Matrix& P, const Vector& b, double c) : dim_(P.rows()) {
  if (P.cols() != dim_ || b.size() != dim_) throw std::invalid_argument("quadratic potential: dimension mismatch");
  values_.resize(dim_ * dim_ + dim_ + 1);
  values_.head(dim_ * dim_) = Eigen::Map<const Vector>(P.data(), dim_ * dim_);
  values_.segment(dim_ * dim_, dim_) = b;
  values_(dim_ * dim_ + dim_) = c;
}

QuadraticPotential::QuadraticPotential(Eigen::Index input_dim)
    : QuadraticPotential(Matrix::Zero(input_dim, input_dim), Vector::Zero(input_dim)) {}

Matrix QuadraticPotential::evaluate(const Matrix& inputs) const {
  const Eigen::Map<const Matrix> p(values_.data(), dim_, dim_);
  const Eigen::Map<const Vector> b(values_.data() + dim_ * dim_, dim_);
  const double c = values_(dim_ * dim_ + dim_);
  Matrix out = 0.5 * inputs.cwiseProduct(p * inputs).colwise().sum();
  out += (b.transpose() * inputs);
  out.array() += c;
  return out;
}

Function::Applier QuadraticPotential::bind(Tape& tape, int group) const {
  Matrix p = Eigen::Map<const Matrix>(values_.data(), dim_, dim_);
  Matrix b = Eigen::Map<const Matrix>(values_.data() + dim_ * dim_, 1, dim_);
  Matrix c = Matrix::Constant(1, 1, values_(dim_ * dim_ + dim_));
  const bool tr = group >= 0;
  const Var pv = tr ? tape.parameter(std::move(p), group, 0) : tape.constant(std::move(p));
  const Var bv = tr ? tape.parameter(std::move(b), group, dim_ * dim_) : tape.constant(std::move(b));
  const Var cv = tr ? tape.parameter(std::move(c), group, dim_ * dim_ + dim_) : tape.constant(std::move(c));
  const Var zero = tape.constant(Matrix::Zero(dim_, 1));
  return [pv, bv, cv, zero](Tape& t, Var z) {
    const Var quad = t.scale(t.col_sum(t.mul(z, t.affine(pv, zero, z))), 0.5);
    return t.add(quad, t.affine(bv, cv, z));
  };
}

std::unique_ptr<Function> QuadraticPotential::clone() const { return std::make_unique<QuadraticPotential>(*this); }

AffineMap::AffineMap(const Matrix& W, const Vector& b) : in_(W.cols()), out_(W.rows()) {
  if (b.size() != out_) throw std::invalid_argument("affine map: dimension mismatch");
  values_.resize(in_ * out_ + out_);
  values_.head(in_ * out_) = Eigen::Map<const Vector>(W.data(), in_ * out_);
  values_.tail(out_) = b;
}

Matrix AffineMap::evaluate(const Matrix& inputs) const {
  const Eigen::Map<const Matrix> w(values_.data(), out_, in_);
  Matrix out = w * inputs;
  out.colwise() += values_.tail(out_);
  return out;
}

Function::Applier AffineMap::bind(Tape& tape, int group) const {
  Matrix w = Eigen::Map<const Matrix>(values_.data(), out_, in_);
  Matrix b = values_.tail(out_);
  const bool tr = group >= 0;
  const Var wv = tr ? tape.parameter(std::move(w), group, 0) : tape.constant(std::move(w));
  const Var bv = tr ? tape.parameter(std::move(b), group, in_ * out_) : tape.constant(std::move(b));
  return [wv, bv](Tape& t, Var z) { return t.affine(wv, bv, z); };
}

std::unique_ptr<Function> AffineMap::clone() const { return std::make_unique<AffineMap>(*this); }

PotentialFn as_potential(const Function& f) {
  return [&f](const Matrix& x, const Matrix& y) { return row_values(f.evaluate(stack_inputs(x, y))); };
}

MapFn as_map(const Function& T) {
  return [&T](const Matrix& x, const Matrix& y) { return Matrix(T.evaluate(stack_inputs(x, y)).transpose()); };
}

// ---------------------------------------------------------------- objectives

double coupling_objective(const PotentialFn& f, const MapFn& T, const WeightedSamples& joint,
                          const WeightedSamples& independent) {
  const double joint_term = weighted_mean(f(joint.x, joint.y), &joint.weights);
  const Matrix t = T(independent.x, independent.y);
  const Vector cost = 0.5 * (t - independent.x).rowwise().squaredNorm();
  const Vector ft = f(t, independent.y);
  return joint_term + weighted_mean(cost - ft, &independent.weights);
}

double empirical_objective(const PotentialFn& f, const MapFn& T, const PairedBatch& batch, CostPairing pairing) {
  if (batch.x.rows() != batch.y.rows() || batch.x_bar.rows() != batch.y.rows()) {
    throw std::invalid_argument("empirical_objective: inconsistent batch");
  }
  const Matrix t = T(batch.x_bar, batch.y);
  const Matrix& target = pairing == CostPairing::shuffled ? batch.x_bar : batch.x;
  const Vector cost = 0.5 * (t - target).rowwise().squaredNorm();
  return (f(batch.x, batch.y) + cost - f(t, batch.y)).mean();
}

double empirical_objective(const MapPair& pair, const PairedBatch& batch, CostPairing pairing) {
  const NetworkFunction f(pair.f);
  const NetworkFunction T(pair.T);
  return empirical_objective(as_potential(f), as_map(T), batch, pairing);
}

// ---------------------------------------------------------------- training

void TrainConfig::validate() const {
  if (outer_iters < 1 || inner_steps_per_outer < 1) throw std::invalid_argument("train config: counts must be >= 1");
  if (!(lr_f > 0.0) || !(lr_T > 0.0)) throw std::invalid_argument("train config: learning rates must be > 0");
  if (!(lr_final_fraction > 0.0) || lr_final_fraction > 1.0) {
    throw std::invalid_argument("train config: lr_final_fraction must be in (0, 1]");
  }
  if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be >= 2");
}

TrainingDiverged::TrainingDiverged(const std::string& what, std::size_t iter, double last)
    : std::runtime_error(what), iteration(iter), last_finite_objective(last) {}

std::vector<TrainCheckpoint> train_functions(Function& f, Function& T, const JointSamples& samples,
                                             const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  samples.validate();
  const auto dim = samples.x.cols() + samples.y.cols();
  if (f.input_dim() != dim || T.input_dim() != dim || f.output_dim() != 1 || T.output_dim() != samples.x.cols()) {
    throw std::invalid_argument("train: function dimensions do not match the samples");
  }
  if (static_cast<std::size_t>(samples.size()) < cfg.batch_size) {
    throw std::invalid_argument("train: batch_size exceeds the number of samples");
  }
  if (cfg.fit_to_data) {
    f.fit_to_data(samples, false);
    T.fit_to_data(samples, true);
  }
  Rng rng = make_rng(derive_seed(cfg.seed, {tag_of("train")}));
  AdamState sf = AdamState::for_size(f.values().size(), cfg.lr_f);
  AdamState sT = AdamState::for_size(T.values().size(), cfg.lr_T);
  const Direction f_dir = cfg.flip_f_direction ? Direction::descend : Direction::ascend;
  const auto b = static_cast<Eigen::Index>(cfg.batch_size);

  std::vector<TrainCheckpoint> trace;
  trace.reserve(cfg.outer_iters);
  double last_finite = 0.0;
  for (std::size_t it = 0; it < cfg.outer_iters; ++it) {
    const double progress = cfg.outer_iters > 1 ? static_cast<double>(it) / static_cast<double>(cfg.outer_iters - 1) : 0.0;
    const double frac = 1.0 - (1.0 - cfg.lr_final_fraction) * progress;
    sf.lr = cfg.lr_f * frac;
    sT.lr = cfg.lr_T * frac;

    const TapeBatch tb = to_tape_layout(draw_minibatch(samples, b, rng), cfg.cost_pairing);
    for (std::size_t k = 0; k < cfg.inner_steps_per_outer; ++k) {
      const double v = map_step(f, T, tb, sT);
      if (!std::isfinite(v)) {
        throw TrainingDiverged("train: objective became non-finite during the map step at iteration " +
                                   std::to_string(it) + " (last finite objective " + std::to_string(last_finite) + ")",
                               it, last_finite);
      }
    }

    const Matrix t = T.evaluate(tb.xby);
    Matrix ty(t.rows() + tb.yt.rows(), t.cols());
    ty << t, tb.yt;
    const double cost = 0.5 * (t - tb.cost_target).colwise().squaredNorm().mean();
    Tape tape;
    const auto fb = f.bind(tape, 0);
    const Var obj = tape.sub(tape.mean(fb(tape, tape.constant(tb.xy))), tape.mean(fb(tape, tape.constant(ty))));
    const double objective = tape.scalar(obj) + cost;
    if (!std::isfinite(objective)) {
      throw TrainingDiverged("train: objective became non-finite at iteration " + std::to_string(it) +
                                 " (last finite objective " + std::to_string(last_finite) + ")",
                             it, last_finite);
    }
    tape.backward(obj);
    diffnet::adam_update(f.values(), tape.gradient(0, f.values().size()), sf, f_dir);
    last_finite = objective;
    trace.push_back({it, objective});

    if (options.on_checkpoint && options.checkpoint_every > 0 && (it + 1) % options.checkpoint_every == 0) {
      options.on_checkpoint(it + 1, f, T);
    }
  }
  return trace;
}

ArchitectureSpec default_potential_arch(std::size_t n, std::size_t m) {
  ArchitectureSpec s;
  s.input_dim = n + m;
  s.output_dim = 1;
  return s;
}

ArchitectureSpec default_map_arch(std::size_t n, std::size_t m) {
  ArchitectureSpec s;
  s.input_dim = n + m;
  s.output_dim = n;
  s.has_enkf_block = true;
  return s;
}

MapPair initial_pair(const JointSamples& samples, const ArchitectureSpec& arch_f, const ArchitectureSpec& arch_T,
                     std::uint64_t seed) {
  NetworkFunction f(diffnet::init_params(arch_f, derive_seed(seed, {tag_of("init"), tag_of("f")})));
  NetworkFunction T(diffnet::init_params(arch_T, derive_seed(seed, {tag_of("init"), tag_of("T")})));
  f.fit_to_data(samples, false);
  T.fit_to_data(samples, true);
  MapPair pair{f.params(), T.params()};
  pair.validate();
  return pair;
}

MapPair train_from(const MapPair& start, const JointSamples& samples, const TrainConfig& cfg,
                   const TrainOptions& options) {
  start.validate();
  NetworkFunction f(start.f);
  NetworkFunction T(start.T);
  train_functions(f, T, samples, cfg, options);
  return {f.params(), T.params()};
}

MapPair train(const JointSamples& samples, const ArchitectureSpec& arch_f, const ArchitectureSpec& arch_T,
              const TrainConfig& cfg, const TrainOptions& options) {
  return train_from(initial_pair(samples, arch_f, arch_T, cfg.seed), samples, cfg, options);
}

// ---------------------------------------------------------------- transport and diagnostics

Matrix transport_points(const Function& T, const Matrix& x, const Vector& y) {
  if (y.size() + x.cols() != T.input_dim()) throw std::invalid_argument("transport: dimension mismatch");
  Matrix z(T.input_dim(), x.rows());
  z.topRows(x.cols()) = x.transpose();
  z.bottomRows(y.size()) = y.replicate(1, x.rows());
  return T.evaluate(z).transpose();
}

Ensemble transport(const MapPair& pair, const Ensemble& ens, const Vector& y) {
  if (ens.dim() != static_cast<Eigen::Index>(pair.state_dim())) {
    throw std::invalid_argument("transport: ensemble dimension mismatch");
  }
  const NetworkFunction T(pair.T);
  return Ensemble(transport_points(T, ens.particles(), y));
}

double joint_consistency_mmd(const MapPair& pair, const JointSamples& samples, Rng& rng) {
  samples.validate();
  const Eigen::Index n = samples.size();
  if (n < 8) {
    // Too few points to split: compare against the samples themselves.
    const PairedBatch b = make_paired_batch(samples, rng);
    const NetworkFunction T(pair.T);
    const Matrix t = as_map(T)(b.x_bar, b.y);
    Matrix gen(n, t.cols() + b.y.cols()), ref(n, t.cols() + b.y.cols());
    gen << t, b.y;
    ref << samples.x, samples.y;
    return mmd(gen, ref);
  }
  const auto perm = uniform_permutation(n, rng);
  const std::vector<Eigen::Index> first(perm.begin(), perm.begin() + n / 2);
  const std::vector<Eigen::Index> second(perm.begin() + n / 2, perm.end());
  JointSamples a{gather_rows(samples.x, first), gather_rows(samples.y, first)};
  const PairedBatch b = make_paired_batch(a, rng);
  const NetworkFunction T(pair.T);
  const Matrix t = as_map(T)(b.x_bar, b.y);
  Matrix gen(t.rows(), t.cols() + b.y.cols());
  gen << t, b.y;
  Matrix ref(static_cast<Eigen::Index>(second.size()), gen.cols());
  ref << gather_rows(samples.x, second), gather_rows(samples.y, second);
  return mmd(gen, ref);
}

ConvexityReport convexity_diagnostic(const Function& f, const JointSamples& samples, std::size_t probe_count,
                                     double fd_step) {
  samples.validate();
  if (probe_count < 1) throw std::invalid_argument("convexity_diagnostic: probe_count must be >= 1");
  if (!(fd_step > 0.0)) throw std::invalid_argument("convexity_diagnostic: fd_step must be > 0");
  const Eigen::Index n = samples.x.cols();
  const Eigen::Index probes = std::min<Eigen::Index>(static_cast<Eigen::Index>(probe_count), samples.size());
  const double h = fd_step;
  double alpha = std::numeric_limits<double>::infinity();
  for (Eigen::Index p = 0; p < probes; ++p) {
    const Eigen::Index row = p * samples.size() / probes;
    const Vector x0 = samples.x.row(row).transpose();
    const Vector y0 = samples.y.row(row).transpose();
    // Stencil: center, +-h e_i, and (+-h e_i +-h e_j) for i < j.
    std::vector<Vector> pts{x0};
    for (Eigen::Index i = 0; i < n; ++i) {
      pts.push_back(x0 + h * Vector::Unit(n, i));
      pts.push_back(x0 - h * Vector::Unit(n, i));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        for (int si : {1, -1}) {
          for (int sj : {1, -1}) pts.push_back(x0 + h * (si * Vector::Unit(n, i) + sj * Vector::Unit(n, j)));
        }
      }
    }
    Matrix z(f.input_dim(), static_cast<Eigen::Index>(pts.size()));
    for (std::size_t k = 0; k < pts.size(); ++k) {
      z.col(static_cast<Eigen::Index>(k)) << pts[k], y0;
    }
    const Vector v = row_values(f.evaluate(z));
    Matrix hess(n, n);
    for (Eigen::Index i = 0; i < n; ++i) hess(i, i) = (v(1 + 2 * i) - 2.0 * v(0) + v(2 + 2 * i)) / (h * h);
    Eigen::Index k = 1 + 2 * n;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double d = (v(k) - v(k + 1) - v(k + 2) + v(k + 3)) / (4.0 * h * h);
        hess(i, j) = hess(j, i) = d;
        k += 4;
      }
    }
    const Matrix g = Matrix::Identity(n, n) - hess;
    alpha = std::min(alpha, Eigen::SelfAdjointEigenSolver<Matrix>(g).eigenvalues().minCoeff());
  }
  return {alpha >= 0.0, alpha};
}

ConvexityReport convexity_diagnostic(const MapPair& pair, const JointSamples& samples, std::size_t probe_count,
                                     double fd_step) {
  return convexity_diagnostic(NetworkFunction(pair.f), samples, probe_count, fd_step);
}

GapEstimate optimality_gap_estimate(const Function& f, const Function& T, const PairedBatch& eval,
                                    const JointSamples& train_samples, const TrainConfig& cfg) {
  cfg.validate();
  train_samples.validate();
  const auto pf = as_potential(f);
  GapEstimate g;
  g.objective_fT = empirical_objective(pf, as_map(T), eval);
  const Matrix t = as_map(T)(eval.x_bar, eval.y);
  g.transport_cost = 0.5 * (t - eval.x_bar).rowwise().squaredNorm().mean();

  auto s = T.clone();
  double best = g.objective_fT;
  Rng rng = make_rng(derive_seed(cfg.seed, {tag_of("gap"), tag_of("inner")}));
  AdamState state = AdamState::for_size(s->values().size(), cfg.lr_T);
  const auto b = static_cast<Eigen::Index>(std::min<std::size_t>(cfg.batch_size, static_cast<std::size_t>(train_samples.size())));
  for (std::size_t it = 0; it < cfg.outer_iters; ++it) {
    const TapeBatch tb = to_tape_layout(draw_minibatch(train_samples, b, rng), CostPairing::shuffled);
    for (std::size_t k = 0; k < cfg.inner_steps_per_outer; ++k) {
      if (!std::isfinite(map_step(f, *s, tb, state))) throw TrainingDiverged("gap estimate: inner map diverged", it, best);
    }
    const double j = empirical_objective(pf, as_map(*s), eval);
    if (std::isfinite(j)) best = std::min(best, j);
  }
  g.objective_fS = best;
  g.inner = std::max(0.0, g.objective_fT - best);
  g.outer = std::max(0.0, g.transport_cost - best);
  g.total = g.inner + g.outer;
  return g;
}

GapEstimate optimality_gap_estimate(const MapPair& pair, const JointSamples& samples, const TrainConfig& cfg) {
  Rng rng = make_rng(derive_seed(cfg.seed, {tag_of("gap"), tag_of("eval")}));
  const PairedBatch eval = make_paired_batch(samples, rng);
  return optimality_gap_estimate(NetworkFunction(pair.f), NetworkFunction(pair.T), eval, samples, cfg);
}

}  // namespace otbayes

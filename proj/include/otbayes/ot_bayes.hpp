#pragma once

#include "otbayes/diffnet/adam.hpp"
#include "otbayes/diffnet/network.hpp"
#include "otbayes/diffnet/tape.hpp"
#include "otbayes/ensemble.hpp"
#include "otbayes/types.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace otbayes {

/// Joint samples (X^i, Y^i) from P_{X,Y}, one row per sample.
struct JointSamples {
  Matrix x;
  Matrix y;

  Eigen::Index size() const { return x.rows(); }
  void validate() const;
};

/// Joint pairs (x, y) and independent pairs (x_bar, y) sharing the same y's.
struct PairedBatch {
  Matrix x;
  Matrix y;
  Matrix x_bar;

  Eigen::Index size() const { return x.rows(); }
};

/// Uniform random permutation of 0..n-1 (Fisher-Yates).
std::vector<Eigen::Index> uniform_permutation(Eigen::Index n, Rng& rng);

/// x_bar^i = x^{sigma_i} for a uniform permutation sigma (fixed points allowed).
PairedBatch make_paired_batch(const JointSamples& samples, Rng& rng);

/// Which x the transport cost is measured against: the shuffled x_bar that is
/// fed to T (default), or the joint partner x as in the displayed estimator.
enum class CostPairing { shuffled, displayed };

/// Potential f (scalar output) and map T (state output), both on inputs (x, y).
struct MapPair {
  diffnet::NetworkParams f;
  diffnet::NetworkParams T;

  void validate() const;
  std::size_t state_dim() const { return T.spec.output_dim; }
  std::size_t obs_dim() const { return T.spec.input_dim - T.spec.output_dim; }
};

/// A differentiable function of the stacked input (x; y) with a flat trainable
/// parameter vector. Batches are laid out features x batch.
class Function {
 public:
  using Applier = std::function<diffnet::Var(diffnet::Tape&, diffnet::Var)>;

  virtual ~Function() = default;
  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  virtual const Vector& values() const = 0;
  virtual Vector& values() = 0;
  virtual Matrix evaluate(const Matrix& inputs) const = 0;
  /// Places the parameters on the tape: trainable in `group`, constants if group < 0.
  /// The returned applier refers to this object, which must outlive the tape.
  virtual Applier bind(diffnet::Tape& tape, int group) const = 0;
  virtual std::unique_ptr<Function> clone() const = 0;
  /// Re-fits frozen data-dependent parts (normalization, EnKF block). Default: none.
  virtual void fit_to_data(const JointSamples&, bool is_map) { (void)is_map; }
};

class NetworkFunction final : public Function {
 public:
  explicit NetworkFunction(diffnet::NetworkParams params);
  Eigen::Index input_dim() const override { return static_cast<Eigen::Index>(params_.spec.input_dim); }
  Eigen::Index output_dim() const override { return static_cast<Eigen::Index>(params_.spec.output_dim); }
  const Vector& values() const override { return params_.values; }
  Vector& values() override { return params_.values; }
  Matrix evaluate(const Matrix& inputs) const override;
  Applier bind(diffnet::Tape& tape, int group) const override;
  std::unique_ptr<Function> clone() const override;
  void fit_to_data(const JointSamples& samples, bool is_map) override;

  const diffnet::NetworkParams& params() const { return params_; }

 private:
  diffnet::NetworkParams params_;
};

/// f(z) = 1/2 z^T P z + b^T z + c with z = (x; y). Values: P (column-major), b, c.
class QuadraticPotential final : public Function {
 public:
  QuadraticPotential(const Matrix& P, const Vector& b, double c = 0.0);
  explicit QuadraticPotential(Eigen::Index input_dim);
  Eigen::Index input_dim() const override { return dim_; }
  Eigen::Index output_dim() const override { return 1; }
  const Vector& values() const override { return values_; }
  Vector& values() override { return values_; }
  Matrix evaluate(const Matrix& inputs) const override;
  Applier bind(diffnet::Tape& tape, int group) const override;
  std::unique_ptr<Function> clone() const override;

 private:
  Eigen::Index dim_;
  Vector values_;
};

/// T(z) = W z + b with z = (x; y). Values: W (column-major), b.
class AffineMap final : public Function {
 public:
  AffineMap(const Matrix& W, const Vector& b);
  Eigen::Index input_dim() const override { return in_; }
  Eigen::Index output_dim() const override { return out_; }
  const Vector& values() const override { return values_; }
  Vector& values() override { return values_; }
  Matrix evaluate(const Matrix& inputs) const override;
  Applier bind(diffnet::Tape& tape, int group) const override;
  std::unique_ptr<Function> clone() const override;

 private:
  Eigen::Index in_, out_;
  Vector values_;
};

/// Batch callables on row-per-sample matrices, for objectives on arbitrary f and T.
using PotentialFn = std::function<Vector(const Matrix& x, const Matrix& y)>;
using MapFn = std::function<Matrix(const Matrix& x, const Matrix& y)>;

PotentialFn as_potential(const Function& f);
MapFn as_map(const Function& T);

/// Row-per-sample points with probability weights (summing to 1).
struct WeightedSamples {
  Matrix x;
  Matrix y;
  Vector weights;
};

/// E_joint[f(X,Y)] + E_ind[1/2 |T(X,Y) - X|^2 - f(T(X,Y), Y)] with explicit
/// weighted measures for the joint and the independent coupling.
double coupling_objective(const PotentialFn& f, const MapFn& T, const WeightedSamples& joint,
                          const WeightedSamples& independent);

/// mean[f(X^i,Y^i) + 1/2 |T(X_bar^i,Y^i) - P^i|^2 - f(T(X_bar^i,Y^i),Y^i)] with P = X_bar
/// (shuffled pairing) or P = X (displayed pairing).
double empirical_objective(const PotentialFn& f, const MapFn& T, const PairedBatch& batch,
                           CostPairing pairing = CostPairing::shuffled);
double empirical_objective(const MapPair& pair, const PairedBatch& batch,
                           CostPairing pairing = CostPairing::shuffled);

struct TrainConfig {
  std::size_t outer_iters = 1000;
  std::size_t inner_steps_per_outer = 10;
  double lr_f = 1e-3;
  double lr_T = 1e-3;
  /// Learning rates decay linearly to this fraction of their start value.
  double lr_final_fraction = 1.0;
  std::size_t batch_size = 512;
  std::uint64_t seed = 0;
  CostPairing cost_pairing = CostPairing::shuffled;
  /// Re-fit normalization and the EnKF block to the samples at the start of training.
  bool fit_to_data = true;
  /// Test hook: descend on f instead of ascending (breaks the max-min orientation).
  bool flip_f_direction = false;

  void validate() const;
};

/// Thrown when the objective becomes non-finite; carries the last diagnostics.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::size_t iteration, double last_finite_objective);
  std::size_t iteration;
  double last_finite_objective;
};

struct TrainCheckpoint {
  std::size_t outer_iter;
  double objective;  // on that iteration's minibatch
};

using CheckpointHook = std::function<void(std::size_t outer_iter, const Function& f, const Function& T)>;

struct TrainOptions {
  CheckpointHook on_checkpoint;
  std::size_t checkpoint_every = 0;  // 0 disables the hook
};

/// Alternating Adam on generic f and T (in place): per outer iteration a fresh
/// minibatch and shuffle, inner_steps descent steps on T, one ascent step on f.
/// Returns the per-iteration minibatch objective trace.
std::vector<TrainCheckpoint> train_functions(Function& f, Function& T, const JointSamples& samples,
                                             const TrainConfig& cfg, const TrainOptions& options = {});

diffnet::ArchitectureSpec default_potential_arch(std::size_t n, std::size_t m);
diffnet::ArchitectureSpec default_map_arch(std::size_t n, std::size_t m);

/// Fresh pair from the architectures (seeded from cfg.seed) trained on the samples.
MapPair train(const JointSamples& samples, const diffnet::ArchitectureSpec& arch_f,
              const diffnet::ArchitectureSpec& arch_T, const TrainConfig& cfg, const TrainOptions& options = {});
/// Continues training from an existing pair (warm start).
MapPair train_from(const MapPair& start, const JointSamples& samples, const TrainConfig& cfg,
                   const TrainOptions& options = {});
/// Untrained pair: random f, T with its residual at zero and EnKF block fitted to the samples.
MapPair initial_pair(const JointSamples& samples, const diffnet::ArchitectureSpec& arch_f,
                     const diffnet::ArchitectureSpec& arch_T, std::uint64_t seed);

/// X^i | y = T(X^i, y).
Ensemble transport(const MapPair& pair, const Ensemble& ens, const Vector& y);
Matrix transport_points(const Function& T, const Matrix& x, const Vector& y);

/// MMD between {(T(x_bar,y), y)} built from one half of the samples and the
/// other half taken as held-out joint samples.
double joint_consistency_mmd(const MapPair& pair, const JointSamples& samples, Rng& rng);

struct ConvexityReport {
  bool is_c_concave = false;
  double alpha_hat = 0.0;
};

/// Minimum eigenvalue of the finite-difference Hessian in x of 1/2|x|^2 - f(x,y)
/// over probe points taken from the samples.
ConvexityReport convexity_diagnostic(const Function& f, const JointSamples& samples, std::size_t probe_count,
                                     double fd_step = 1e-3);
ConvexityReport convexity_diagnostic(const MapPair& pair, const JointSamples& samples, std::size_t probe_count,
                                     double fd_step = 1e-3);

struct GapEstimate {
  double total = 0.0;
  double inner = 0.0;   // [J(f,T) - J(f,S)]_+
  double outer = 0.0;   // [E c(T(X_bar,Y), X_bar) - J(f,S)]_+
  double objective_fT = 0.0;
  double objective_fS = 0.0;
  double transport_cost = 0.0;
};

/// Estimate of the optimality gap: S is trained against the frozen f from T with
/// the same budget (best iterate kept); min over maps is replaced by J(f,S) and
/// the outer max by the transport cost of T, so the estimate is biased upward.
GapEstimate optimality_gap_estimate(const Function& f, const Function& T, const PairedBatch& eval,
                                    const JointSamples& train_samples, const TrainConfig& cfg);
GapEstimate optimality_gap_estimate(const MapPair& pair, const JointSamples& samples, const TrainConfig& cfg);

}  // namespace otbayes

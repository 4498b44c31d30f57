#pragma once

#include "otbayes/diffnet/tape.hpp"
#include "otbayes/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace otbayes::diffnet {

enum class Activation { relu, tanh };

/// Shape of a residual network: an input layer, `num_residual_blocks` blocks of
/// the form h + W2 act(W1 h + b1) + b2, and a linear output layer.
///
/// With `has_enkf_block`, the input is split as (x, y) with x of dimension
/// output_dim; the network output is z + residual(z, y) where z is the frozen
/// ensemble-Kalman affine map of (x, y).
struct ArchitectureSpec {
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  std::size_t hidden_width = 64;
  std::size_t num_residual_blocks = 2;
  Activation activation = Activation::relu;
  bool has_enkf_block = false;

  void validate() const;
  std::size_t parameter_count() const;
  std::size_t state_dim() const { return output_dim; }
  std::size_t obs_dim() const { return input_dim - output_dim; }

  bool operator==(const ArchitectureSpec&) const = default;
};

/// Frozen affine map z = x + K (y - (obs_mean + H (x - state_mean))).
struct EnkfBlock {
  Matrix gain;          // n x m
  Matrix obs_jacobian;  // m x n
  Vector state_mean;    // n
  Vector obs_mean;      // m

  static EnkfBlock identity(std::size_t n, std::size_t m);
  /// Estimates gain and linearized observation map from paired samples
  /// (row per sample) with empirical 1/(N-1) covariances.
  static EnkfBlock estimate(const Matrix& states, const Matrix& observations);

  Vector apply(const Vector& x, const Vector& y) const;
  /// Returns (A, c) such that z = A [x; y] + c.
  std::pair<Matrix, Vector> as_affine() const;
};

/// Frozen input standardization and output scaling of the trainable path.
/// Identity by default.
struct Normalization {
  Vector input_shift;
  Vector input_scale;
  Vector output_scale;

  static Normalization identity(std::size_t input_dim, std::size_t output_dim);
};

struct NetworkParams {
  ArchitectureSpec spec;
  Vector values;
  std::optional<EnkfBlock> enkf;
  Normalization normalization;

  /// Checks the length/finite invariants; throws std::invalid_argument.
  void validate() const;
};

NetworkParams init_params(const ArchitectureSpec& spec, std::uint64_t seed);

/// Evaluates the network on a batch laid out input_dim x B.
Matrix forward_batch(const NetworkParams& params, const Matrix& inputs);
Vector forward(const NetworkParams& params, const Vector& input);

/// A network whose parameters have been placed on a tape as leaves of one
/// gradient group. It can be applied to several inputs on the same tape; the
/// parameter adjoints accumulate across uses.
class BoundNetwork {
 public:
  BoundNetwork(Tape& tape, const NetworkParams& params, int group);
  /// Parameters as constants: the network is differentiable in its input only.
  static BoundNetwork frozen(Tape& tape, const NetworkParams& params);

  Var apply(Tape& tape, Var input) const;
  const std::vector<Var>& parameter_leaves() const { return leaves_; }
  const NetworkParams& params() const { return *params_; }

 private:
  BoundNetwork() = default;
  void bind(Tape& tape, int group, bool trainable);

  const NetworkParams* params_ = nullptr;
  std::vector<Var> leaves_;
  Var enkf_matrix_, enkf_offset_, norm_scale_, norm_shift_, out_scale_, out_zero_;
};

/// Loss built on a tape from a bound network and a batch variable.
using LossBuilder = std::function<Var(Tape&, const BoundNetwork&, Var batch)>;

/// Exact reverse-mode gradient of a loss with respect to params.values.
Vector gradient(const LossBuilder& loss, const NetworkParams& params, const Matrix& batch);

/// Jacobian of the network output with respect to its input at one point,
/// computed with one reverse pass per output component.
Matrix input_jacobian(const NetworkParams& params, const Vector& input);

}  // namespace otbayes::diffnet

#pragma once

#include "otbayes/types.hpp"

#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace otbayes::diffnet {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
};

enum class Primitive {
  leaf,
  affine,
  relu,
  tanh,
  add,
  sub,
  mul,
  scale,
  square,
  sum,
  mean,
  col_sum,
  concat_rows,
  slice_rows,
};

class UnsupportedPrimitive : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Reverse-mode tape over dense matrices. Values are laid out features x batch,
/// so a batch of B samples of dimension d is a d x B matrix.
///
/// Leaves are either constants (no adjoint), free inputs (adjoint readable via
/// adjoint()), or parameters that scatter their adjoint into a flat gradient
/// buffer identified by (group, offset).
class Tape {
 public:
  Var constant(Matrix value);
  Var input(Matrix value);
  Var parameter(Matrix value, int group, Eigen::Index offset);

  /// w * x + b, with b (rows x 1) broadcast over columns.
  Var affine(Var w, Var b, Var x);
  Var relu(Var x);
  Var tanh(Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// Elementwise product.
  Var mul(Var a, Var b);
  Var scale(Var x, double factor);
  Var square(Var x);
  /// Sum of all entries (1 x 1).
  Var sum(Var x);
  /// Mean of all entries (1 x 1).
  Var mean(Var x);
  /// Sum over rows, one entry per column (1 x cols).
  Var col_sum(Var x);
  Var concat_rows(Var top, Var bottom);
  Var slice_rows(Var x, Eigen::Index start, Eigen::Index count);

  /// Builds a node from a primitive name ("affine", "relu", "square", ...).
  /// `scalar` is used by "scale"; "slice_rows" reads start/count from `extra`.
  /// Throws UnsupportedPrimitive for names outside the supported set.
  Var apply(std::string_view primitive, std::span<const Var> args, double scalar = 0.0,
            std::span<const Eigen::Index> extra = {});

  const Matrix& value(Var v) const;
  double scalar(Var v) const;

  /// Seeds d(output)/d(output) = 1 for a 1 x 1 output and propagates adjoints.
  void backward(Var output);
  /// Adjoint of a node after backward(); zero matrix if the node received none.
  Matrix adjoint(Var v) const;
  /// Gathers the adjoints of every parameter in `group` into a flat vector.
  Vector gradient(int group, Eigen::Index size) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Primitive op = Primitive::leaf;
    int a = -1;
    int b = -1;
    int c = -1;
    double factor = 0.0;
    Eigen::Index i0 = 0;
    Eigen::Index i1 = 0;
    bool needs_grad = false;
    int group = -1;
    Eigen::Index offset = 0;
    Matrix value;
    Matrix adj;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  bool any_grad(std::initializer_list<int> ids) const;
  void accumulate(int id, Matrix delta);

  std::vector<Node> nodes_;
};

}  // namespace otbayes::diffnet

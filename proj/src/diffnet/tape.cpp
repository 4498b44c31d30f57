#include "otbayes/diffnet/tape.hpp"

#include <string>
#include <utility>

namespace otbayes::diffnet {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::out_of_range("tape: invalid variable handle");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

bool Tape::any_grad(std::initializer_list<int> ids) const {
  for (int id : ids) {
    if (id >= 0 && nodes_[static_cast<std::size_t>(id)].needs_grad) return true;
  }
  return false;
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::input(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Matrix value, int group, Eigen::Index offset) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  n.group = group;
  n.offset = offset;
  return push(std::move(n));
}

Var Tape::affine(Var w, Var b, Var x) {
  const Matrix& W = node(w).value;
  const Matrix& B = node(b).value;
  const Matrix& X = node(x).value;
  if (W.cols() != X.rows()) throw std::invalid_argument("affine: inner dimension mismatch");
  if (B.rows() != W.rows() || B.cols() != 1) throw std::invalid_argument("affine: bias shape mismatch");
  Node n;
  n.op = Primitive::affine;
  n.a = w.id;
  n.b = b.id;
  n.c = x.id;
  n.value = W * X;
  n.value.colwise() += B.col(0);
  n.needs_grad = any_grad({w.id, b.id, x.id});
  return push(std::move(n));
}

Var Tape::relu(Var x) {
  Node n;
  n.op = Primitive::relu;
  n.a = x.id;
  n.value = node(x).value.cwiseMax(0.0);
  n.needs_grad = any_grad({x.id});
  return push(std::move(n));
}

Var Tape::tanh(Var x) {
  Node n;
  n.op = Primitive::tanh;
  n.a = x.id;
  n.value = node(x).value.array().tanh().matrix();
  n.needs_grad = any_grad({x.id});
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  require_same_shape(node(a).value, node(b).value, "add");
  Node n;
  n.op = Primitive::add;
  n.a = a.id;
  n.b = b.id;
  n.value = node(a).value + node(b).value;
  n.needs_grad = any_grad({a.id, b.id});
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(node(a).value, node(b).value, "sub");
  Node n;
  n.op = Primitive::sub;
  n.a = a.id;
  n.b = b.id;
  n.value = node(a).value - node(b).value;
  n.needs_grad = any_grad({a.id, b.id});
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(node(a).value, node(b).value, "mul");
  Node n;
  n.op = Primitive::mul;
  n.a = a.id;
  n.b = b.id;
  n.value = node(a).value.cwiseProduct(node(b).value);
  n.needs_grad = any_grad({a.id, b.id});
  return push(std::move(n));
}

Var Tape::scale(Var x, double factor) {
  Node n;
  n.op = Primitive::scale;
  n.a = x.id;
  n.factor = factor;
  n.value = node(x).value * factor;
  n.needs_grad = any_grad({x.id});
  return push(std::move(n));
}

Var Tape::square(Var x) {
  Node n;
  n.op = Primitive::square;
  n.a = x.id;
  n.value = node(x).value.array().square().matrix();
  n.needs_grad = any_grad({x.id});
  return push(std::move(n));
}

Var Tape::sum(Var x) {
  Node n;
  n.op = Primitive::sum;
  n.a = x.id;
  n.value = Matrix::Constant(1, 1, node(x).value.sum());
  n.needs_grad = any_grad({x.id});
  return push(std::move(n));
}

Var Tape::mean(Var x) {
  const Matrix& X = node(x).value;
  if (X.size() == 0) throw std::invalid_argument("mean: empty operand");
  Node n;
  n.op = Primitive::mean;
  n.a = x.id;
  n.value = Matrix::Constant(1, 1, X.mean());
  n.needs_grad = any_grad({x.id});
  return push(std::move(n));
}

Var Tape::col_sum(Var x) {
  Node n;
  n.op = Primitive::col_sum;
  n.a = x.id;
  n.value = node(x).value.colwise().sum();
  n.needs_grad = any_grad({x.id});
  return push(std::move(n));
}

Var Tape::concat_rows(Var top, Var bottom) {
  const Matrix& T = node(top).value;
  const Matrix& B = node(bottom).value;
  if (T.cols() != B.cols()) throw std::invalid_argument("concat_rows: column mismatch");
  Node n;
  n.op = Primitive::concat_rows;
  n.a = top.id;
  n.b = bottom.id;
  n.value.resize(T.rows() + B.rows(), T.cols());
  n.value << T, B;
  n.needs_grad = any_grad({top.id, bottom.id});
  return push(std::move(n));
}

Var Tape::slice_rows(Var x, Eigen::Index start, Eigen::Index count) {
  const Matrix& X = node(x).value;
  if (start < 0 || count < 0 || start + count > X.rows()) {
    throw std::invalid_argument("slice_rows: range out of bounds");
  }
  Node n;
  n.op = Primitive::slice_rows;
  n.a = x.id;
  n.i0 = start;
  n.i1 = count;
  n.value = X.middleRows(start, count);
  n.needs_grad = any_grad({x.id});
  return push(std::move(n));
}

Var Tape::apply(std::string_view primitive, std::span<const Var> args, double scalar,
                std::span<const Eigen::Index> extra) {
  auto arity = [&](std::size_t k) {
    if (args.size() != k) {
      throw std::invalid_argument("primitive '" + std::string(primitive) + "' expects " +
                                  std::to_string(k) + " arguments");
    }
  };
  if (primitive == "affine") { arity(3); return affine(args[0], args[1], args[2]); }
  if (primitive == "relu") { arity(1); return relu(args[0]); }
  if (primitive == "tanh") { arity(1); return tanh(args[0]); }
  if (primitive == "add") { arity(2); return add(args[0], args[1]); }
  if (primitive == "sub") { arity(2); return sub(args[0], args[1]); }
  if (primitive == "mul" || primitive == "product") { arity(2); return mul(args[0], args[1]); }
  if (primitive == "scale") { arity(1); return scale(args[0], scalar); }
  if (primitive == "square") { arity(1); return square(args[0]); }
  if (primitive == "sum") { arity(1); return sum(args[0]); }
  if (primitive == "mean") { arity(1); return mean(args[0]); }
  if (primitive == "col_sum") { arity(1); return col_sum(args[0]); }
  if (primitive == "concat_rows") { arity(2); return concat_rows(args[0], args[1]); }
  if (primitive == "slice_rows") {
    arity(1);
    if (extra.size() != 2) throw std::invalid_argument("slice_rows expects start and count");
    return slice_rows(args[0], extra[0], extra[1]);
  }
  throw UnsupportedPrimitive("unsupported primitive '" + std::string(primitive) + "'");
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const Matrix& m = node(v).value;
  if (m.size() != 1) throw std::invalid_argument("tape: node is not a scalar");
  return m(0, 0);
}

void Tape::accumulate(int id, Matrix delta) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (n.adj.size() == 0) {
    n.adj = std::move(delta);
  } else {
    n.adj += delta;
  }
}

void Tape::backward(Var output) {
  if (node(output).value.size() != 1) throw std::invalid_argument("backward: output must be 1 x 1");
  for (Node& n : nodes_) n.adj.resize(0, 0);
  nodes_[static_cast<std::size_t>(output.id)].adj = Matrix::Ones(1, 1);

  for (int id = output.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.adj.size() == 0 || n.op == Primitive::leaf) continue;
    // Interior adjoints are consumed here; only leaves keep theirs.
    Matrix g = std::move(n.adj);
    switch (n.op) {
      case Primitive::affine: {
        const Matrix& W = nodes_[static_cast<std::size_t>(n.a)].value;
        const Matrix& X = nodes_[static_cast<std::size_t>(n.c)].value;
        if (nodes_[static_cast<std::size_t>(n.a)].needs_grad) accumulate(n.a, g * X.transpose());
        if (nodes_[static_cast<std::size_t>(n.b)].needs_grad) accumulate(n.b, g.rowwise().sum());
        if (nodes_[static_cast<std::size_t>(n.c)].needs_grad) accumulate(n.c, W.transpose() * g);
        break;
      }
      case Primitive::relu:
        accumulate(n.a, (n.value.array() > 0.0).select(g, 0.0));
        break;
      case Primitive::tanh:
        accumulate(n.a, (g.array() * (1.0 - n.value.array().square())).matrix());
        break;
      case Primitive::add:
        accumulate(n.a, g);
        accumulate(n.b, std::move(g));
        break;
      case Primitive::sub:
        accumulate(n.b, -g);
        accumulate(n.a, std::move(g));
        break;
      case Primitive::mul: {
        const Matrix& A = nodes_[static_cast<std::size_t>(n.a)].value;
        const Matrix& B = nodes_[static_cast<std::size_t>(n.b)].value;
        accumulate(n.a, g.cwiseProduct(B));
        accumulate(n.b, g.cwiseProduct(A));
        break;
      }
      case Primitive::scale:
        g *= n.factor;
        accumulate(n.a, std::move(g));
        break;
      case Primitive::square: {
        const Matrix& X = nodes_[static_cast<std::size_t>(n.a)].value;
        accumulate(n.a, 2.0 * g.cwiseProduct(X));
        break;
      }
      case Primitive::sum: {
        const Matrix& X = nodes_[static_cast<std::size_t>(n.a)].value;
        accumulate(n.a, Matrix::Constant(X.rows(), X.cols(), g(0, 0)));
        break;
      }
      case Primitive::mean: {
        const Matrix& X = nodes_[static_cast<std::size_t>(n.a)].value;
        accumulate(n.a, Matrix::Constant(X.rows(), X.cols(), g(0, 0) / static_cast<double>(X.size())));
        break;
      }
      case Primitive::col_sum: {
        const Matrix& X = nodes_[static_cast<std::size_t>(n.a)].value;
        accumulate(n.a, g.replicate(X.rows(), 1));
        break;
      }
      case Primitive::concat_rows: {
        const Eigen::Index top_rows = nodes_[static_cast<std::size_t>(n.a)].value.rows();
        accumulate(n.a, g.topRows(top_rows));
        accumulate(n.b, g.bottomRows(g.rows() - top_rows));
        break;
      }
      case Primitive::slice_rows: {
        const Matrix& X = nodes_[static_cast<std::size_t>(n.a)].value;
        Matrix full = Matrix::Zero(X.rows(), X.cols());
        full.middleRows(n.i0, n.i1) = g;
        accumulate(n.a, full);
        break;
      }
      case Primitive::leaf:
        break;
    }
  }
}

Matrix Tape::adjoint(Var v) const {
  const Node& n = node(v);
  if (n.adj.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adj;
}

Vector Tape::gradient(int group, Eigen::Index size) const {
  Vector g = Vector::Zero(size);
  for (const Node& n : nodes_) {
    if (n.op != Primitive::leaf || n.group != group || n.adj.size() == 0) continue;
    if (n.offset + n.adj.size() > size) throw std::out_of_range("tape: parameter slice exceeds gradient size");
    g.segment(n.offset, n.adj.size()) += Eigen::Map<const Vector>(n.adj.data(), n.adj.size());
  }
  return g;
}

}  // namespace otbayes::diffnet

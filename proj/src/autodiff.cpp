#include "infosep/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

namespace infosep::ad {

std::string Shape::str() const {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

std::string_view op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::add_row: return "add_row";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::add_scalar: return "add_scalar";
    case Op::concat_cols: return "concat_cols";
    case Op::concat_rows: return "concat_rows";
    case Op::slice_cols: return "slice_cols";
    case Op::slice_rows: return "slice_rows";
    case Op::pad_cols: return "pad_cols";
    case Op::leaky_relu: return "leaky_relu";
    case Op::square: return "square";
    case Op::sqrt: return "sqrt";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::sigmoid: return "sigmoid";
    case Op::clamp: return "clamp";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::row_l2_norm: return "row_l2_norm";
    case Op::row_sum: return "row_sum";
    case Op::col_sum: return "col_sum";
    case Op::transpose: return "transpose";
    case Op::broadcast_rows: return "broadcast_rows";
    case Op::broadcast_cols: return "broadcast_cols";
    case Op::broadcast_scalar: return "broadcast_scalar";
    case Op::permute_rows: return "permute_rows";
  }
  return "?";
}

const Matrix& Var::value() const { return graph->value(*this); }
Shape Var::shape() const { return shape_of(graph->value(*this)); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) {
    throw ShapeError("scalar(): node has shape " + shape().str());
  }
  return v(0, 0);
}

namespace {

[[noreturn]] void shape_error(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

[[noreturn]] void shape_error(std::string_view op, const Shape& a, const std::string& why) {
  throw ShapeError(std::string(op) + ": operand " + a.str() + " " + why);
}

Matrix leaky_mask(const Matrix& x, double slope) {
  return x.unaryExpr([slope](double v) { return v >= 0.0 ? 1.0 : slope; });
}

Matrix clamp_mask(const Matrix& x, double lo, double hi) {
  return x.unaryExpr([lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

}  // namespace

// ---------------------------------------------------------------------------
// Construction

void Graph::check(Var v, std::string_view op) const {
  if (v.graph != this || v.id >= nodes_.size()) {
    throw GraphError(std::string(op) + ": operand does not belong to this graph");
  }
}

Var Graph::push(Node node) {
  node.requires_grad = node.op == Op::leaf
                           ? node.requires_grad
                           : std::any_of(node.parents.begin(), node.parents.end(),
                                         [this](NodeId p) { return nodes_[p].requires_grad; });
  if (node.op != Op::leaf) evaluate(node);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
}

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Graph::parameter(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  check(a, "matmul");
  check(b, "matmul");
  if (a.cols() != b.rows()) shape_error("matmul", a.shape(), b.shape());
  Node n;
  n.op = Op::matmul;
  n.parents = {a.id, b.id};
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  check(a, "add");
  check(b, "add");
  Node n;
  if (a.shape() == b.shape()) {
    n.op = Op::add;
  } else if (b.rows() == 1 && b.cols() == a.cols()) {
    n.op = Op::add_row;
  } else {
    shape_error("add", a.shape(), b.shape());
  }
  n.parents = {a.id, b.id};
  return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
  check(a, "sub");
  check(b, "sub");
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  Node n;
  n.op = Op::sub;
  n.parents = {a.id, b.id};
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  check(a, "mul");
  check(b, "mul");
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  Node n;
  n.op = Op::mul;
  n.parents = {a.id, b.id};
  return push(std::move(n));
}

Var Graph::scale(Var a, double factor) {
  check(a, "scale");
  Node n;
  n.op = Op::scale;
  n.parents = {a.id};
  n.p0 = factor;
  return push(std::move(n));
}

Var Graph::add_scalar(Var a, double offset) {
  check(a, "add_scalar");
  Node n;
  n.op = Op::add_scalar;
  n.parents = {a.id};
  n.p0 = offset;
  return push(std::move(n));
}

Var Graph::concat(Var a, Var b, int axis) {
  check(a, "concat");
  check(b, "concat");
  Node n;
  if (axis == 1) {
    if (a.rows() != b.rows()) shape_error("concat(axis=1)", a.shape(), b.shape());
    n.op = Op::concat_cols;
  } else if (axis == 0) {
    if (a.cols() != b.cols()) shape_error("concat(axis=0)", a.shape(), b.shape());
    n.op = Op::concat_rows;
  } else {
    throw ShapeError("concat: axis must be 0 or 1");
  }
  n.parents = {a.id, b.id};
  return push(std::move(n));
}

Var Graph::slice_cols(Var a, Index begin, Index count) {
  check(a, "slice_cols");
  if (begin < 0 || count < 1 || begin + count > a.cols()) {
    shape_error("slice_cols", a.shape(),
                "cannot supply columns [" + std::to_string(begin) + ", " +
                    std::to_string(begin + count) + ")");
  }
  Node n;
  n.op = Op::slice_cols;
  n.parents = {a.id};
  n.i0 = begin;
  n.i1 = count;
  return push(std::move(n));
}

Var Graph::slice_rows(Var a, Index begin, Index count) {
  check(a, "slice_rows");
  if (begin < 0 || count < 1 || begin + count > a.rows()) {
    shape_error("slice_rows", a.shape(),
                "cannot supply rows [" + std::to_string(begin) + ", " +
                    std::to_string(begin + count) + ")");
  }
  Node n;
  n.op = Op::slice_rows;
  n.parents = {a.id};
  n.i0 = begin;
  n.i1 = count;
  return push(std::move(n));
}

Var Graph::pad_cols(Var a, Index total_cols, Index begin) {
  check(a, "pad_cols");
  if (begin < 0 || begin + a.cols() > total_cols) {
    shape_error("pad_cols", a.shape(), "does not fit into " + std::to_string(total_cols) + " columns");
  }
  Node n;
  n.op = Op::pad_cols;
  n.parents = {a.id};
  n.i0 = begin;
  n.i1 = total_cols;
  return push(std::move(n));
}

#define INFOSEP_UNARY(fn, tag)   \
  Var Graph::fn(Var a) {         \
    check(a, #fn);               \
    Node n;                      \
    n.op = Op::tag;              \
    n.parents = {a.id};          \
    return push(std::move(n));   \
  }

INFOSEP_UNARY(square, square)
INFOSEP_UNARY(sqrt, sqrt)
INFOSEP_UNARY(exp, exp)
INFOSEP_UNARY(log, log)
INFOSEP_UNARY(sigmoid, sigmoid)
INFOSEP_UNARY(sum, sum)
INFOSEP_UNARY(mean, mean)
INFOSEP_UNARY(row_l2_norm, row_l2_norm)
INFOSEP_UNARY(row_sum, row_sum)
INFOSEP_UNARY(col_sum, col_sum)
INFOSEP_UNARY(transpose, transpose)

#undef INFOSEP_UNARY

Var Graph::leaky_relu(Var a, double slope) {
  check(a, "leaky_relu");
  Node n;
  n.op = Op::leaky_relu;
  n.parents = {a.id};
  n.p0 = slope;
  return push(std::move(n));
}

Var Graph::clamp(Var a, double lo, double hi) {
  check(a, "clamp");
  if (!(lo <= hi)) throw ShapeError("clamp: lower bound exceeds upper bound");
  Node n;
  n.op = Op::clamp;
  n.parents = {a.id};
  n.p0 = lo;
  n.p1 = hi;
  return push(std::move(n));
}

Var Graph::broadcast_rows(Var a, Index rows) {
  check(a, "broadcast_rows");
  if (a.rows() != 1 || rows < 1) shape_error("broadcast_rows", a.shape(), "is not a single row");
  Node n;
  n.op = Op::broadcast_rows;
  n.parents = {a.id};
  n.i0 = rows;
  return push(std::move(n));
}

Var Graph::broadcast_cols(Var a, Index cols) {
  check(a, "broadcast_cols");
  if (a.cols() != 1 || cols < 1) shape_error("broadcast_cols", a.shape(), "is not a single column");
  Node n;
  n.op = Op::broadcast_cols;
  n.parents = {a.id};
  n.i0 = cols;
  return push(std::move(n));
}

Var Graph::broadcast_scalar(Var a, Index rows, Index cols) {
  check(a, "broadcast_scalar");
  if (a.shape().size() != 1 || rows < 1 || cols < 1) {
    shape_error("broadcast_scalar", a.shape(), "is not 1x1");
  }
  Node n;
  n.op = Op::broadcast_scalar;
  n.parents = {a.id};
  n.i0 = rows;
  n.i1 = cols;
  return push(std::move(n));
}

Var Graph::permute_rows(Var a, std::span<const Index> perm) {
  check(a, "permute_rows");
  const Index rows = a.rows();
  if (static_cast<Index>(perm.size()) != rows) {
    shape_error("permute_rows", a.shape(),
                "needs a permutation of length " + std::to_string(rows) + ", got " +
                    std::to_string(perm.size()));
  }
  std::vector<bool> seen(static_cast<std::size_t>(rows), false);
  for (Index p : perm) {
    if (p < 0 || p >= rows || seen[static_cast<std::size_t>(p)]) {
      throw ShapeError("permute_rows: index array is not a bijection on {0.." +
                       std::to_string(rows - 1) + "}");
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
  Node n;
  n.op = Op::permute_rows;
  n.parents = {a.id};
  n.perm.assign(perm.begin(), perm.end());
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Forward evaluation

void Graph::evaluate(Node& n) const {
  const auto in = [&](std::size_t k) -> const Matrix& { return nodes_[n.parents[k]].value; };
  switch (n.op) {
    case Op::leaf:
      return;
    case Op::matmul:
      n.value.resize(in(0).rows(), in(1).cols());
      n.value.noalias() = in(0) * in(1);
      return;
    case Op::add:
      n.value = in(0) + in(1);
      return;
    case Op::add_row:
      n.value = in(0).rowwise() + in(1).row(0);
      return;
    case Op::sub:
      n.value = in(0) - in(1);
      return;
    case Op::mul:
      n.value = in(0).cwiseProduct(in(1));
      return;
    case Op::scale:
      n.value = in(0) * n.p0;
      return;
    case Op::add_scalar:
      n.value = in(0).array() + n.p0;
      return;
    case Op::concat_cols: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      n.value.resize(a.rows(), a.cols() + b.cols());
      n.value.leftCols(a.cols()) = a;
      n.value.rightCols(b.cols()) = b;
      return;
    }
    case Op::concat_rows: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      n.value.resize(a.rows() + b.rows(), a.cols());
      n.value.topRows(a.rows()) = a;
      n.value.bottomRows(b.rows()) = b;
      return;
    }
    case Op::slice_cols:
      n.value = in(0).middleCols(n.i0, n.i1);
      return;
    case Op::slice_rows:
      n.value = in(0).middleRows(n.i0, n.i1);
      return;
    case Op::pad_cols:
      n.value = Matrix::Zero(in(0).rows(), n.i1);
      n.value.middleCols(n.i0, in(0).cols()) = in(0);
      return;
    case Op::leaky_relu: {
      const double slope = n.p0;
      n.value = in(0).unaryExpr([slope](double v) { return v >= 0.0 ? v : slope * v; });
      return;
    }
    case Op::square:
      n.value = in(0).array().square();
      return;
    case Op::sqrt:
      n.value = in(0).array().sqrt();
      return;
    case Op::exp:
      n.value = in(0).array().exp();
      return;
    case Op::log:
      n.value = in(0).array().log();
      return;
    case Op::sigmoid:
      n.value = in(0).unaryExpr([](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      });
      return;
    case Op::clamp:
      n.value = in(0).cwiseMax(n.p0).cwiseMin(n.p1);
      return;
    case Op::sum:
      n.value = Matrix::Constant(1, 1, in(0).sum());
      return;
    case Op::mean:
      n.value = Matrix::Constant(1, 1, in(0).mean());
      return;
    case Op::row_l2_norm:
      n.value = in(0).rowwise().norm();
      return;
    case Op::row_sum:
      n.value = in(0).rowwise().sum();
      return;
    case Op::col_sum:
      n.value = in(0).colwise().sum();
      return;
    case Op::transpose:
      n.value = in(0).transpose();
      return;
    case Op::broadcast_rows:
      n.value = in(0).replicate(n.i0, 1);
      return;
    case Op::broadcast_cols:
      n.value = in(0).replicate(1, n.i0);
      return;
    case Op::broadcast_scalar:
      n.value = Matrix::Constant(n.i0, n.i1, in(0)(0, 0));
      return;
    case Op::permute_rows: {
      const Matrix& a = in(0);
      n.value.resize(a.rows(), a.cols());
      for (Index j = 0; j < a.rows(); ++j) n.value.row(j) = a.row(n.perm[static_cast<std::size_t>(j)]);
      return;
    }
  }
}

void Graph::set_value(Var leaf, Matrix value) {
  check(leaf, "set_value");
  Node& n = nodes_[leaf.id];
  if (n.op != Op::leaf) throw GraphError("set_value: node is not a leaf");
  if (shape_of(value) != shape_of(n.value)) shape_error("set_value", shape_of(n.value), shape_of(value));
  n.value = std::move(value);
}

void Graph::recompute() {
  for (Node& n : nodes_) evaluate(n);
}

// ---------------------------------------------------------------------------
// Numeric reverse sweep

void Graph::accumulate(NodeId id, const Matrix& contribution) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.has_grad) {
    n.grad += contribution;
  } else {
    n.grad = contribution;
    n.has_grad = true;
  }
}

void Graph::propagate(const Node& n) {
  const Matrix& g = n.grad;
  const auto in = [&](std::size_t k) -> const Matrix& { return nodes_[n.parents[k]].value; };
  const auto wants = [&](std::size_t k) { return nodes_[n.parents[k]].requires_grad; };
  switch (n.op) {
    case Op::leaf:
      return;
    case Op::matmul:
      if (wants(0)) accumulate(n.parents[0], g * in(1).transpose());
      if (wants(1)) accumulate(n.parents[1], in(0).transpose() * g);
      return;
    case Op::add:
      accumulate(n.parents[0], g);
      accumulate(n.parents[1], g);
      return;
    case Op::add_row:
      accumulate(n.parents[0], g);
      if (wants(1)) accumulate(n.parents[1], g.colwise().sum());
      return;
    case Op::sub:
      accumulate(n.parents[0], g);
      if (wants(1)) accumulate(n.parents[1], -g);
      return;
    case Op::mul:
      if (wants(0)) accumulate(n.parents[0], g.cwiseProduct(in(1)));
      if (wants(1)) accumulate(n.parents[1], g.cwiseProduct(in(0)));
      return;
    case Op::scale:
      accumulate(n.parents[0], g * n.p0);
      return;
    case Op::add_scalar:
      accumulate(n.parents[0], g);
      return;
    case Op::concat_cols: {
      const Index ca = in(0).cols();
      if (wants(0)) accumulate(n.parents[0], g.leftCols(ca));
      if (wants(1)) accumulate(n.parents[1], g.rightCols(g.cols() - ca));
      return;
    }
    case Op::concat_rows: {
      const Index ra = in(0).rows();
      if (wants(0)) accumulate(n.parents[0], g.topRows(ra));
      if (wants(1)) accumulate(n.parents[1], g.bottomRows(g.rows() - ra));
      return;
    }
    case Op::slice_cols: {
      if (!wants(0)) return;
      Matrix full = Matrix::Zero(in(0).rows(), in(0).cols());
      full.middleCols(n.i0, n.i1) = g;
      accumulate(n.parents[0], full);
      return;
    }
    case Op::slice_rows: {
      if (!wants(0)) return;
      Matrix full = Matrix::Zero(in(0).rows(), in(0).cols());
      full.middleRows(n.i0, n.i1) = g;
      accumulate(n.parents[0], full);
      return;
    }
    case Op::pad_cols:
      accumulate(n.parents[0], g.middleCols(n.i0, in(0).cols()));
      return;
    case Op::leaky_relu:
      accumulate(n.parents[0], g.cwiseProduct(leaky_mask(in(0), n.p0)));
      return;
    case Op::square:
      accumulate(n.parents[0], 2.0 * g.cwiseProduct(in(0)));
      return;
    case Op::sqrt:
      accumulate(n.parents[0], (0.5 * g.array() / n.value.array()).matrix());
      return;
    case Op::exp:
      accumulate(n.parents[0], g.cwiseProduct(n.value));
      return;
    case Op::log:
      accumulate(n.parents[0], (g.array() / in(0).array()).matrix());
      return;
    case Op::sigmoid:
      accumulate(n.parents[0],
                 (g.array() * n.value.array() * (1.0 - n.value.array())).matrix());
      return;
    case Op::clamp:
      accumulate(n.parents[0], g.cwiseProduct(clamp_mask(in(0), n.p0, n.p1)));
      return;
    case Op::sum:
      accumulate(n.parents[0], Matrix::Constant(in(0).rows(), in(0).cols(), g(0, 0)));
      return;
    case Op::mean: {
      const double share = g(0, 0) / static_cast<double>(in(0).size());
      accumulate(n.parents[0], Matrix::Constant(in(0).rows(), in(0).cols(), share));
      return;
    }
    case Op::row_l2_norm: {
      const Matrix& x = in(0);
      Matrix d(x.rows(), x.cols());
      for (Index r = 0; r < x.rows(); ++r) {
        const double norm = n.value(r, 0);
        // Subgradient 0 at the origin.
        if (norm > 0.0) {
          d.row(r) = x.row(r) * (g(r, 0) / norm);
        } else {
          d.row(r).setZero();
        }
      }
      accumulate(n.parents[0], d);
      return;
    }
    case Op::row_sum:
      accumulate(n.parents[0], g.replicate(1, in(0).cols()));
      return;
    case Op::col_sum:
      accumulate(n.parents[0], g.replicate(in(0).rows(), 1));
      return;
    case Op::transpose:
      accumulate(n.parents[0], g.transpose());
      return;
    case Op::broadcast_rows:
      accumulate(n.parents[0], g.colwise().sum());
      return;
    case Op::broadcast_cols:
      accumulate(n.parents[0], g.rowwise().sum());
      return;
    case Op::broadcast_scalar:
      accumulate(n.parents[0], Matrix::Constant(1, 1, g.sum()));
      return;
    case Op::permute_rows: {
      Matrix d = Matrix::Zero(g.rows(), g.cols());
      for (Index j = 0; j < g.rows(); ++j) d.row(n.perm[static_cast<std::size_t>(j)]) += g.row(j);
      accumulate(n.parents[0], d);
      return;
    }
  }
}

void Graph::backward(Var root) {
  check(root, "backward");
  if (nodes_[root.id].value.size() != 1) {
    throw GraphError("backward: root must be scalar, got shape " + root.shape().str());
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  Node& r = nodes_[root.id];
  if (!r.requires_grad) return;
  r.grad = Matrix::Ones(1, 1);
  r.has_grad = true;
  for (NodeId id = root.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (n.has_grad && n.op != Op::leaf) propagate(n);
  }
}

Matrix Graph::grad(Var v) const {
  check(v, "grad");
  const Node& n = nodes_[v.id];
  if (n.has_grad) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

bool Graph::has_grad(Var v) const {
  check(v, "has_grad");
  return nodes_[v.id].has_grad;
}

const Matrix& Graph::value(Var v) const {
  check(v, "value");
  return nodes_[v.id].value;
}

Op Graph::op(Var v) const {
  check(v, "op");
  return nodes_[v.id].op;
}

bool Graph::requires_grad(Var v) const {
  check(v, "requires_grad");
  return nodes_[v.id].requires_grad;
}

std::size_t Graph::count(Op op) const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [op](const Node& n) { return n.op == op; }));
}

// ---------------------------------------------------------------------------
// Reverse sweep emitted as graph nodes

Var Graph::gradient_graph(Var f, Var v) {
  check(f, "gradient_graph");
  check(v, "gradient_graph");
  if (nodes_[f.id].value.size() != 1) {
    throw GraphError("gradient_graph: f must be scalar, got shape " + f.shape().str());
  }
  if (v.id > f.id) throw GraphError("gradient_graph: v is not an ancestor of f");

  // Nodes between v and f that depend on v; only these carry adjoints.
  const NodeId lo = v.id;
  const NodeId hi = f.id;
  std::vector<bool> depends(hi - lo + 1, false);
  depends[0] = true;
  for (NodeId id = lo + 1; id <= hi; ++id) {
    for (NodeId p : nodes_[id].parents) {
      if (p >= lo && depends[p - lo]) {
        depends[id - lo] = true;
        break;
      }
    }
  }
  if (!depends[hi - lo]) throw GraphError("gradient_graph: v is not an ancestor of f");
  const auto dep = [&](NodeId id) { return id >= lo && depends[id - lo]; };

  std::vector<std::optional<Var>> adjoint(hi - lo + 1);
  const auto add_adjoint = [&](NodeId id, Var contribution) {
    auto& slot = adjoint[id - lo];
    slot = slot ? add(*slot, contribution) : contribution;
  };
  adjoint[hi - lo] = constant(Matrix::Ones(1, 1));

  for (NodeId id = hi; id > lo; --id) {
    if (!depends[id - lo] || !adjoint[id - lo]) continue;
    const Var g = *adjoint[id - lo];
    // Copy what we need: creating nodes below may reallocate nodes_.
    const Op op = nodes_[id].op;
    const std::vector<NodeId> parents = nodes_[id].parents;
    const double p0 = nodes_[id].p0;
    const double p1 = nodes_[id].p1;
    const Index i0 = nodes_[id].i0;
    const Index i1 = nodes_[id].i1;
    const Var self{this, id};
    const auto parent = [&](std::size_t k) { return Var{this, parents[k]}; };

    switch (op) {
      case Op::leaf:
        break;
      case Op::matmul:
        if (dep(parents[0])) add_adjoint(parents[0], matmul(g, transpose(parent(1))));
        if (dep(parents[1])) add_adjoint(parents[1], matmul(transpose(parent(0)), g));
        break;
      case Op::add:
        if (dep(parents[0])) add_adjoint(parents[0], g);
        if (dep(parents[1])) add_adjoint(parents[1], g);
        break;
      case Op::add_row:
        if (dep(parents[0])) add_adjoint(parents[0], g);
        if (dep(parents[1])) add_adjoint(parents[1], col_sum(g));
        break;
      case Op::sub:
        if (dep(parents[0])) add_adjoint(parents[0], g);
        if (dep(parents[1])) add_adjoint(parents[1], scale(g, -1.0));
        break;
      case Op::mul:
        if (dep(parents[0])) add_adjoint(parents[0], mul(g, parent(1)));
        if (dep(parents[1])) add_adjoint(parents[1], mul(g, parent(0)));
        break;
      case Op::scale:
        add_adjoint(parents[0], scale(g, p0));
        break;
      case Op::add_scalar:
        add_adjoint(parents[0], g);
        break;
      case Op::concat_cols: {
        const Index ca = nodes_[parents[0]].value.cols();
        const Index cb = nodes_[parents[1]].value.cols();
        if (dep(parents[0])) add_adjoint(parents[0], slice_cols(g, 0, ca));
        if (dep(parents[1])) add_adjoint(parents[1], slice_cols(g, ca, cb));
        break;
      }
      case Op::concat_rows: {
        const Index ra = nodes_[parents[0]].value.rows();
        const Index rb = nodes_[parents[1]].value.rows();
        if (dep(parents[0])) add_adjoint(parents[0], slice_rows(g, 0, ra));
        if (dep(parents[1])) add_adjoint(parents[1], slice_rows(g, ra, rb));
        break;
      }
      case Op::slice_cols:
        add_adjoint(parents[0], pad_cols(g, nodes_[parents[0]].value.cols(), i0));
        break;
      case Op::pad_cols:
        add_adjoint(parents[0], slice_cols(g, i0, nodes_[parents[0]].value.cols()));
        break;
      case Op::leaky_relu:
        add_adjoint(parents[0], mul(g, constant(leaky_mask(nodes_[parents[0]].value, p0))));
        break;
      case Op::clamp:
        add_adjoint(parents[0], mul(g, constant(clamp_mask(nodes_[parents[0]].value, p0, p1))));
        break;
      case Op::square:
        add_adjoint(parents[0], mul(g, scale(parent(0), 2.0)));
        break;
      case Op::exp:
        add_adjoint(parents[0], mul(g, self));
        break;
      case Op::sigmoid: {
        const Var one_minus = add_scalar(scale(self, -1.0), 1.0);
        add_adjoint(parents[0], mul(g, mul(self, one_minus)));
        break;
      }
      case Op::sum: {
        const Shape s = shape_of(nodes_[parents[0]].value);
        add_adjoint(parents[0], broadcast_scalar(g, s.rows, s.cols));
        break;
      }
      case Op::mean: {
        const Shape s = shape_of(nodes_[parents[0]].value);
        add_adjoint(parents[0],
                    scale(broadcast_scalar(g, s.rows, s.cols), 1.0 / static_cast<double>(s.size())));
        break;
      }
      case Op::row_sum:
        add_adjoint(parents[0], broadcast_cols(g, nodes_[parents[0]].value.cols()));
        break;
      case Op::col_sum:
        add_adjoint(parents[0], broadcast_rows(g, nodes_[parents[0]].value.rows()));
        break;
      case Op::transpose:
        add_adjoint(parents[0], transpose(g));
        break;
      case Op::broadcast_rows:
        add_adjoint(parents[0], col_sum(g));
        break;
      case Op::broadcast_cols:
        add_adjoint(parents[0], row_sum(g));
        break;
      case Op::broadcast_scalar:
        add_adjoint(parents[0], sum(g));
        break;
      case Op::permute_rows: {
        const std::vector<Index>& perm = nodes_[id].perm;
        std::vector<Index> inverse(perm.size());
        for (std::size_t j = 0; j < perm.size(); ++j) inverse[static_cast<std::size_t>(perm[j])] = static_cast<Index>(j);
        add_adjoint(parents[0], permute_rows(g, inverse));
        break;
      }
      case Op::slice_rows:
      case Op::sqrt:
      case Op::log:
      case Op::row_l2_norm:
        throw GraphError("gradient_graph: op '" + std::string(op_name(op)) +
                         "' has no graph-level derivative");
    }
    (void)i1;
  }
  return *adjoint[0];
}

}  // namespace infosep::ad

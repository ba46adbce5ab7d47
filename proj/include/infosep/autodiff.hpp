#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Graph is an append-only tape: every node stores its forward value and the
// ids of its parents, which always precede it. backward() runs the numeric
// reverse sweep. gradient_graph() instead emits the reverse sweep as new graph
// nodes, so the resulting input-gradient is itself differentiable (needed for
// the critic's gradient penalty).

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace infosep::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;
using NodeId = std::uint32_t;

struct Shape {
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

inline Shape shape_of(const Matrix& m) { return {m.rows(), m.cols()}; }

/// Raised when operand shapes are incompatible with an op.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised on structural misuse (non-scalar backward root, foreign nodes, ...).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Op : std::uint8_t {
  leaf,
  matmul,
  add,
  add_row,  // b x n plus a 1 x n bias row
  sub,
  mul,
  scale,
  add_scalar,
  concat_cols,
  concat_rows,
  slice_cols,
  slice_rows,
  pad_cols,
  leaky_relu,
  square,
  sqrt,
  exp,
  log,
  sigmoid,
  clamp,
  sum,
  mean,
  row_l2_norm,
  row_sum,
  col_sum,
  transpose,
  broadcast_rows,    // 1 x n -> b x n
  broadcast_cols,    // b x 1 -> b x n
  broadcast_scalar,  // 1 x 1 -> b x n
  permute_rows,
};

std::string_view op_name(Op op);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  NodeId id = 0;

  const Matrix& value() const;
  Shape shape() const;
  Index rows() const { return shape().rows; }
  Index cols() const { return shape().cols; }
  double scalar() const;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Matrix value);
  Var constant(double value);
  /// Leaf that receives a gradient in backward().
  Var parameter(Matrix value);

  Var matmul(Var a, Var b);
  /// Same-shape addition, or row-wise bias addition when b is 1 x n.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var add_scalar(Var a, double offset);
  Var concat(Var a, Var b, int axis = 1);
  Var slice_cols(Var a, Index begin, Index count);
  Var slice_rows(Var a, Index begin, Index count);
  Var pad_cols(Var a, Index total_cols, Index begin);
  Var leaky_relu(Var a, double slope);
  Var square(Var a);
  Var sqrt(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sigmoid(Var a);
  Var clamp(Var a, double lo, double hi);
  Var sum(Var a);
  Var mean(Var a);
  Var row_l2_norm(Var a);
  Var row_sum(Var a);
  Var col_sum(Var a);
  Var transpose(Var a);
  Var broadcast_rows(Var a, Index rows);
  Var broadcast_cols(Var a, Index cols);
  Var broadcast_scalar(Var a, Index rows, Index cols);
  Var permute_rows(Var a, std::span<const Index> perm);

  /// Numeric reverse sweep from a 1 x 1 root. Gradients of previous sweeps are
  /// discarded; contributions along multiple paths accumulate.
  void backward(Var root);

  /// d(root)/d(v) from the last backward(); zeros if v was not reached.
  Matrix grad(Var v) const;
  bool has_grad(Var v) const;

  /// Builds d(f)/d(v) out of graph primitives. The result is an ordinary node,
  /// so backward() through any function of it reaches the parameters of f.
  /// LeakyReLU contributes its activation mask as a constant, which is exact
  /// for piecewise-linear networks.
  Var gradient_graph(Var f, Var v);

  /// Replaces the value of a leaf; call recompute() to refresh descendants.
  void set_value(Var leaf, Matrix value);
  /// Re-evaluates every non-leaf node in creation (topological) order.
  void recompute();

  const Matrix& value(Var v) const;
  Op op(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  std::size_t count(Op op) const;

 private:
  struct Node {
    Op op = Op::leaf;
    std::vector<NodeId> parents;
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    bool requires_grad = false;
    double p0 = 0.0;
    double p1 = 0.0;
    Index i0 = 0;
    Index i1 = 0;
    std::vector<Index> perm;
  };

  Var push(Node node);
  void check(Var v, std::string_view op) const;
  void evaluate(Node& node) const;
  void accumulate(NodeId id, const Matrix& contribution);
  void propagate(const Node& node);

  std::vector<Node> nodes_;
};

inline Var operator+(Var a, Var b) { return a.graph->add(a, b); }
inline Var operator-(Var a, Var b) { return a.graph->sub(a, b); }

}  // namespace infosep::ad

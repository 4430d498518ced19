// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0
//
// Expression-graph engine: construction, evaluation, and differentiation by
// graph transformation. The derivative of a graph is another graph over the
// same primitive set, so differentiation nests to any order; that is what
// makes operators containing derivatives (score functions, divergences)
// differentiable again by the optimizer.

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "opvi/errors.hpp"

namespace opvi {

/// Static shape of a graph value: a scalar or a fixed-length vector.
/// A length-1 vector is distinct from a scalar.
class Shape {
 public:
  static Shape scalar() { return Shape(0); }
  static Shape vector(int len) {
    if (len < 1) throw ShapeError("vector shape needs len >= 1");
    return Shape(len);
  }

  bool is_scalar() const { return len_ == 0; }
  bool is_vector() const { return len_ > 0; }
  /// Vector length; 0 for scalars.
  int len() const { return len_; }
  /// Number of stored doubles (1 for scalars).
  int size() const { return len_ == 0 ? 1 : len_; }

  friend bool operator==(Shape a, Shape b) { return a.len_ == b.len_; }
  friend bool operator!=(Shape a, Shape b) { return a.len_ != b.len_; }

 private:
  explicit Shape(int len) : len_(len) {}
  int len_;
};

enum class OpKind : std::uint8_t {
  kConstant,
  kInput,
  kParam,
  kAdd,
  kMul,  // elementwise; one operand may be scalar (broadcast)
  kNeg,
  kReciprocal,
  kExp,
  kLog,
  kTanh,
  kRelu,
  kSigmoid,
  kSoftplus,
  kSquare,
  kDot,
  kAffine,  // inputs: x, row_1..row_k, bias -> vector(k)
  kSum,
  kNormClip,      // rescale to the L2 ball of radius `bound`
  kSelectBySign,  // inputs: cond, a, b; cond > 0 picks a
};

const char* op_name(OpKind k);

struct NodeId {
  std::uint32_t index = UINT32_MAX;
  bool valid() const { return index != UINT32_MAX; }
  friend bool operator==(NodeId a, NodeId b) { return a.index == b.index; }
  friend bool operator!=(NodeId a, NodeId b) { return a.index != b.index; }
};

struct Node {
  OpKind kind;
  Shape shape;
  std::vector<NodeId> inputs;
  std::vector<double> payload;  // kConstant: the value
  std::string name;             // kInput / kParam: variable name
  double bound = 0.0;           // kNormClip: ball radius
};

/// Runtime value passed in and out of evaluation.
class Value {
 public:
  static Value scalar(double x) {
    Value v(Shape::scalar());
    v.data_.resize(1);
    v.data_[0] = x;
    return v;
  }
  static Value vector(Eigen::VectorXd x) {
    if (x.size() < 1) throw ShapeError("Value::vector needs len >= 1");
    Value v(Shape::vector(static_cast<int>(x.size())));
    v.data_ = std::move(x);
    return v;
  }

  Shape shape() const { return shape_; }
  double as_scalar() const {
    if (!shape_.is_scalar()) throw ShapeError("Value is not a scalar");
    return data_[0];
  }
  const Eigen::VectorXd& as_vector() const {
    if (!shape_.is_vector()) throw ShapeError("Value is not a vector");
    return data_;
  }
  const Eigen::VectorXd& raw() const { return data_; }

 private:
  explicit Value(Shape s) : shape_(s) {}
  Shape shape_;
  Eigen::VectorXd data_;
};

/// Variable name -> value map for one-shot evaluation.
class Bindings {
 public:
  Bindings& set(const std::string& name, double x) {
    values_.insert_or_assign(name, Value::scalar(x));
    return *this;
  }
  Bindings& set(const std::string& name, Eigen::VectorXd x) {
    values_.insert_or_assign(name, Value::vector(std::move(x)));
    return *this;
  }
  const Value* find(const std::string& name) const {
    auto it = values_.find(name);
    return it == values_.end() ? nullptr : &it->second;
  }
  const std::unordered_map<std::string, Value>& map() const { return values_; }

 private:
  std::unordered_map<std::string, Value> values_;
};

/// Append-only arena of expression nodes.
///
/// Nodes are immutable once emitted and the node list is topologically
/// ordered by construction (inputs always precede consumers), so a graph is
/// safe to read from any number of threads. Construction is single-threaded.
/// Emission folds constants, applies a handful of algebraic identities
/// (x+0, x*1, x*0, --x), and deduplicates structurally identical nodes.
class Graph {
 public:
  NodeId constant(double x);
  NodeId constant(const Eigen::VectorXd& v);
  NodeId zeros(Shape s);
  NodeId ones(Shape s);
  /// Basis vector e_i of length len.
  NodeId basis(int i, int len);

  NodeId input(const std::string& name, Shape s);
  NodeId param(const std::string& name, Shape s);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b) { return add(a, neg(b)); }
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b) { return mul(a, reciprocal(b)); }
  NodeId neg(NodeId a);
  NodeId reciprocal(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId softplus(NodeId a);
  NodeId square(NodeId a);
  NodeId dot(NodeId a, NodeId b);
  NodeId affine(NodeId x, std::span<const NodeId> rows, NodeId bias);
  NodeId affine(NodeId x, std::initializer_list<NodeId> rows, NodeId bias) {
    return affine(x, std::span<const NodeId>(rows.begin(), rows.size()), bias);
  }
  NodeId sum(NodeId a);
  NodeId norm_clip(NodeId h, double bound);
  NodeId select_by_sign(NodeId cond, NodeId a, NodeId b);

  /// Scalar multiple c*x (broadcasts over vectors).
  NodeId scale(double c, NodeId x) { return mul(constant(c), x); }
  /// i-th component of a vector, as dot(v, e_i).
  NodeId component(NodeId v, int i);
  /// Vector assembled from scalar parts: sum_i parts[i] * e_i.
  NodeId pack(std::span<const NodeId> parts);
  NodeId pack(std::initializer_list<NodeId> parts) {
    return pack(std::span<const NodeId>(parts.begin(), parts.size()));
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const;
  Shape shape(NodeId id) const { return node(id).shape; }
  /// Id of the variable with this name, or an invalid id.
  NodeId find_variable(std::string_view name) const;

 private:
  NodeId emit(Node n);
  NodeId append(Node n);
  void check_id(NodeId id) const;

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::uint32_t> variables_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> dedup_;
};

/// Reusable evaluation workspace for one graph.
///
/// Holds a flat value buffer indexed by node; bind variables, then ask for
/// node values. All values requested within one epoch (between clear()
/// calls) share memoized intermediates. Evaluation never mutates the graph;
/// concurrent evaluation is safe with one Evaluator per thread. select-by-sign
/// with a scalar condition evaluates only the branch it takes.
class Evaluator {
 public:
  explicit Evaluator(const Graph& g);

  const Graph& graph() const { return *g_; }

  /// Invalidates memoized intermediates. Variable bindings persist; rebinding
  /// a variable implies clear(), so callers rarely need this directly.
  void clear();
  void bind(std::string_view name, double x);
  void bind(std::string_view name, const Eigen::Ref<const Eigen::VectorXd>& x);
  void bind(NodeId var, double x);
  void bind(NodeId var, const Eigen::Ref<const Eigen::VectorXd>& x);
  /// Binds every entry whose name names a variable of the graph; entries
  /// without a matching variable are ignored.
  void bind(const Bindings& b);

  double scalar(NodeId id);
  Eigen::VectorXd vector(NodeId id);
  Value value(NodeId id);
  /// View of the computed slot; valid until the next clear().
  std::span<const double> slot(NodeId id);

 private:
  void sync();
  void run(std::uint32_t target);
  void compute(std::uint32_t id);
  bool stamped(std::uint32_t id) const { return stamps_[id] == epoch_; }
  double* out(std::uint32_t id) { return buffer_.data() + offsets_[id]; }
  const double* in(std::uint32_t id) const {
    return buffer_.data() + offsets_[id];
  }

  struct Frame {
    std::uint32_t id;
    std::uint8_t phase;
  };

  const Graph* g_;
  std::vector<std::size_t> offsets_;
  std::vector<double> buffer_;
  std::vector<std::uint32_t> stamps_;
  std::vector<char> is_bound_;
  std::vector<std::uint32_t> bound_vars_;
  std::vector<Frame> stack_;
  std::uint32_t epoch_ = 1;
  std::size_t synced_nodes_ = 0;
};

/// One-shot evaluation helpers (construct a temporary Evaluator).
Value eval(const Graph& g, NodeId root, const Bindings& b);
double eval_scalar(const Graph& g, NodeId root, const Bindings& b);

// --- Differentiation by graph transformation ---------------------------

/// Reverse-mode gradient: returns a node evaluating d(root)/d(wrt), with the
/// shape of wrt. root must be scalar. wrt may be any node; for non-variable
/// nodes the result is the sensitivity of root to that node's value.
NodeId grad(Graph& g, NodeId root, NodeId wrt);

/// Gradients of one scalar root with respect to several nodes, sharing a
/// single adjoint construction. Nodes listed in stop_at are treated as
/// independent leaves: contributions are accumulated at them but not
/// propagated into their inputs.
std::vector<NodeId> grad_multi(Graph& g, NodeId root,
                               std::span<const NodeId> wrt,
                               std::span<const NodeId> stop_at = {});

/// Divergence sum_i d f_i / d z_i of a vector field f built on z, computed
/// as d forward-tangent passes seeded at z's coordinates. z may be a
/// variable or any vector node f was built on; the result is scalar and
/// remains differentiable.
NodeId divergence(Graph& g, NodeId f, NodeId z);

/// Forward-mode directional derivative of root along a seed tangent placed
/// at node z (internal building block of divergence; exposed for tests).
NodeId tangent(Graph& g, NodeId root, NodeId z, NodeId seed);

}  // namespace opvi

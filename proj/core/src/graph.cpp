// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#include "opvi/graph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <utility>

namespace opvi {
namespace {

struct Arg {
  const double* p;
  int size;
};

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Shared by construction-time folding and the evaluator. `out` has
// n.shape.size() doubles and never aliases an input.
void compute_kernel(const Node& n, const std::vector<Arg>& in, double* out) {
  const int m = n.shape.size();
  switch (n.kind) {
    case OpKind::kConstant:
      std::copy(n.payload.begin(), n.payload.end(), out);
      return;
    case OpKind::kAdd:
      for (int j = 0; j < m; ++j) out[j] = in[0].p[j] + in[1].p[j];
      return;
    case OpKind::kMul:
      if (in[0].size == in[1].size) {
        for (int j = 0; j < m; ++j) out[j] = in[0].p[j] * in[1].p[j];
      } else if (in[0].size == 1) {
        for (int j = 0; j < m; ++j) out[j] = in[0].p[0] * in[1].p[j];
      } else {
        for (int j = 0; j < m; ++j) out[j] = in[0].p[j] * in[1].p[0];
      }
      return;
    case OpKind::kNeg:
      for (int j = 0; j < m; ++j) out[j] = -in[0].p[j];
      return;
    case OpKind::kReciprocal:
      for (int j = 0; j < m; ++j) out[j] = 1.0 / in[0].p[j];
      return;
    case OpKind::kExp:
      for (int j = 0; j < m; ++j) out[j] = std::exp(in[0].p[j]);
      return;
    case OpKind::kLog:
      for (int j = 0; j < m; ++j) out[j] = std::log(in[0].p[j]);
      return;
    case OpKind::kTanh:
      for (int j = 0; j < m; ++j) out[j] = std::tanh(in[0].p[j]);
      return;
    case OpKind::kRelu:
      for (int j = 0; j < m; ++j) out[j] = in[0].p[j] > 0.0 ? in[0].p[j] : 0.0;
      return;
    case OpKind::kSigmoid:
      for (int j = 0; j < m; ++j) out[j] = stable_sigmoid(in[0].p[j]);
      return;
    case OpKind::kSoftplus:
      for (int j = 0; j < m; ++j) out[j] = stable_softplus(in[0].p[j]);
      return;
    case OpKind::kSquare:
      for (int j = 0; j < m; ++j) out[j] = in[0].p[j] * in[0].p[j];
      return;
    case OpKind::kDot: {
      double acc = 0.0;
      for (int j = 0; j < in[0].size; ++j) acc += in[0].p[j] * in[1].p[j];
      out[0] = acc;
      return;
    }
    case OpKind::kAffine: {
      const Arg& x = in[0];
      const Arg& bias = in.back();
      for (int i = 0; i < m; ++i) {
        double acc = bias.p[i];
        const double* w = in[1 + i].p;
        for (int j = 0; j < x.size; ++j) acc += w[j] * x.p[j];
        out[i] = acc;
      }
      return;
    }
    case OpKind::kSum: {
      double acc = 0.0;
      for (int j = 0; j < in[0].size; ++j) acc += in[0].p[j];
      out[0] = acc;
      return;
    }
    case OpKind::kNormClip: {
      double r2 = 0.0;
      for (int j = 0; j < m; ++j) r2 += in[0].p[j] * in[0].p[j];
      if (r2 <= n.bound * n.bound) {
        std::copy_n(in[0].p, m, out);
      } else {
        const double c = n.bound / std::sqrt(r2);
        for (int j = 0; j < m; ++j) out[j] = c * in[0].p[j];
      }
      return;
    }
    case OpKind::kSelectBySign:
      if (in[0].size == 1) {
        std::copy_n(in[0].p[0] > 0.0 ? in[1].p : in[2].p, m, out);
      } else {
        for (int j = 0; j < m; ++j) {
          out[j] = in[0].p[j] > 0.0 ? in[1].p[j] : in[2].p[j];
        }
      }
      return;
    case OpKind::kInput:
    case OpKind::kParam:
      break;
  }
  throw GraphError("compute_kernel: unexpected node kind");
}

bool is_const(const std::vector<Node>& nodes, NodeId id) {
  return nodes[id.index].kind == OpKind::kConstant;
}

bool const_filled(const std::vector<Node>& nodes, NodeId id, double v) {
  const Node& n = nodes[id.index];
  if (n.kind != OpKind::kConstant) return false;
  return std::all_of(n.payload.begin(), n.payload.end(),
                     [v](double x) { return x == v; });
}

std::uint64_t node_hash(const Node& n) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t x) {
    h ^= x;
    h *= 1099511628211ULL;
  };
  mix(static_cast<std::uint64_t>(n.kind));
  mix(static_cast<std::uint64_t>(n.shape.len()));
  for (NodeId in : n.inputs) mix(in.index);
  for (double v : n.payload) mix(std::bit_cast<std::uint64_t>(v));
  mix(std::bit_cast<std::uint64_t>(n.bound));
  return h;
}

bool node_equal(const Node& a, const Node& b) {
  if (a.kind != b.kind || a.shape != b.shape ||
      a.inputs.size() != b.inputs.size() ||
      a.payload.size() != b.payload.size()) {
    return false;
  }
  if (std::bit_cast<std::uint64_t>(a.bound) !=
      std::bit_cast<std::uint64_t>(b.bound)) {
    return false;
  }
  for (std::size_t i = 0; i < a.inputs.size(); ++i) {
    if (a.inputs[i] != b.inputs[i]) return false;
  }
  for (std::size_t i = 0; i < a.payload.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a.payload[i]) !=
        std::bit_cast<std::uint64_t>(b.payload[i])) {
      return false;
    }
  }
  return a.name == b.name;
}

}  // namespace

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kConstant: return "constant";
    case OpKind::kInput: return "input";
    case OpKind::kParam: return "param";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kNeg: return "neg";
    case OpKind::kReciprocal: return "reciprocal";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kSquare: return "square";
    case OpKind::kDot: return "dot";
    case OpKind::kAffine: return "affine";
    case OpKind::kSum: return "sum";
    case OpKind::kNormClip: return "norm-clip";
    case OpKind::kSelectBySign: return "select-by-sign";
  }
  return "?";
}

// --- Graph construction -------------------------------------------------

void Graph::check_id(NodeId id) const {
  if (!id.valid() || id.index >= nodes_.size()) {
    throw GraphError("node id out of range");
  }
}

const Node& Graph::node(NodeId id) const {
  check_id(id);
  return nodes_[id.index];
}

NodeId Graph::find_variable(std::string_view name) const {
  auto it = variables_.find(std::string(name));
  return it == variables_.end() ? NodeId{} : NodeId{it->second};
}

NodeId Graph::append(Node n) {
  if (nodes_.size() >= UINT32_MAX) throw GraphError("graph too large");
  nodes_.push_back(std::move(n));
  return {static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Graph::emit(Node n) {
  // Fold when every input is a constant, unless the folded value would be
  // non-finite; those stay symbolic so that a lazy select can still skip
  // them (e.g. the clipped branch of norm-clip at h = 0).
  const bool all_const = !n.inputs.empty() &&
                         std::all_of(n.inputs.begin(), n.inputs.end(),
                                     [this](NodeId id) {
                                       return is_const(nodes_, id);
                                     });
  if (all_const) {
    std::vector<Arg> args;
    args.reserve(n.inputs.size());
    for (NodeId id : n.inputs) {
      const Node& in = nodes_[id.index];
      args.push_back({in.payload.data(), in.shape.size()});
    }
    std::vector<double> folded(n.shape.size());
    compute_kernel(n, args, folded.data());
    if (std::all_of(folded.begin(), folded.end(),
                    [](double v) { return std::isfinite(v); })) {
      if (n.shape.is_scalar()) return constant(folded[0]);
      return constant(Eigen::Map<const Eigen::VectorXd>(
          folded.data(), static_cast<Eigen::Index>(folded.size())));
    }
  }

  switch (n.kind) {
    case OpKind::kAdd:
      if (const_filled(nodes_, n.inputs[0], 0.0)) return n.inputs[1];
      if (const_filled(nodes_, n.inputs[1], 0.0)) return n.inputs[0];
      break;
    case OpKind::kMul:
      if (const_filled(nodes_, n.inputs[0], 0.0) ||
          const_filled(nodes_, n.inputs[1], 0.0)) {
        return zeros(n.shape);
      }
      if (const_filled(nodes_, n.inputs[0], 1.0) &&
          nodes_[n.inputs[1].index].shape == n.shape) {
        return n.inputs[1];
      }
      if (const_filled(nodes_, n.inputs[1], 1.0) &&
          nodes_[n.inputs[0].index].shape == n.shape) {
        return n.inputs[0];
      }
      break;
    case OpKind::kNeg:
      if (nodes_[n.inputs[0].index].kind == OpKind::kNeg) {
        return nodes_[n.inputs[0].index].inputs[0];
      }
      break;
    case OpKind::kDot:
      if (const_filled(nodes_, n.inputs[0], 0.0) ||
          const_filled(nodes_, n.inputs[1], 0.0)) {
        return constant(0.0);
      }
      break;
    case OpKind::kAffine:
      if (const_filled(nodes_, n.inputs[0], 0.0)) return n.inputs.back();
      break;
    case OpKind::kSelectBySign: {
      const Node& cond = nodes_[n.inputs[0].index];
      if (cond.kind == OpKind::kConstant && cond.shape.is_scalar()) {
        return cond.payload[0] > 0.0 ? n.inputs[1] : n.inputs[2];
      }
      if (n.inputs[1] == n.inputs[2]) return n.inputs[1];
      break;
    }
    default:
      break;
  }

  const std::uint64_t h = node_hash(n);
  auto& bucket = dedup_[h];
  for (std::uint32_t idx : bucket) {
    if (node_equal(nodes_[idx], n)) return {idx};
  }
  NodeId id = append(std::move(n));
  bucket.push_back(id.index);
  return id;
}

NodeId Graph::constant(double x) {
  Node n{OpKind::kConstant, Shape::scalar(), {}, {x}, "", 0.0};
  return emit(std::move(n));
}

NodeId Graph::constant(const Eigen::VectorXd& v) {
  if (v.size() < 1) throw ShapeError("constant vector needs len >= 1");
  Node n{OpKind::kConstant, Shape::vector(static_cast<int>(v.size())),
         {},
         std::vector<double>(v.data(), v.data() + v.size()),
         "",
         0.0};
  return emit(std::move(n));
}

NodeId Graph::zeros(Shape s) {
  if (s.is_scalar()) return constant(0.0);
  return constant(Eigen::VectorXd::Zero(s.len()));
}

NodeId Graph::ones(Shape s) {
  if (s.is_scalar()) return constant(1.0);
  return constant(Eigen::VectorXd::Ones(s.len()));
}

NodeId Graph::basis(int i, int len) {
  if (len < 1 || i < 0 || i >= len) {
    throw InvalidArgumentError("basis: index out of range");
  }
  Eigen::VectorXd e = Eigen::VectorXd::Zero(len);
  e[i] = 1.0;
  return constant(e);
}

NodeId Graph::input(const std::string& name, Shape s) {
  auto it = variables_.find(name);
  if (it != variables_.end()) {
    const Node& ex = nodes_[it->second];
    if (ex.kind != OpKind::kInput || ex.shape != s) {
      throw GraphError("variable redeclared with a different role or shape: " +
                       name);
    }
    return {it->second};
  }
  NodeId id = append(Node{OpKind::kInput, s, {}, {}, name, 0.0});
  variables_.emplace(name, id.index);
  return id;
}

NodeId Graph::param(const std::string& name, Shape s) {
  auto it = variables_.find(name);
  if (it != variables_.end()) {
    const Node& ex = nodes_[it->second];
    if (ex.kind != OpKind::kParam || ex.shape != s) {
      throw GraphError("variable redeclared with a different role or shape: " +
                       name);
    }
    return {it->second};
  }
  NodeId id = append(Node{OpKind::kParam, s, {}, {}, name, 0.0});
  variables_.emplace(name, id.index);
  return id;
}

NodeId Graph::add(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  if (shape(a) != shape(b)) throw ShapeError("add: operand shapes differ");
  return emit(Node{OpKind::kAdd, shape(a), {a, b}, {}, "", 0.0});
}

NodeId Graph::mul(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  Shape sa = shape(a), sb = shape(b);
  Shape out = sa;
  if (sa != sb) {
    if (sa.is_scalar()) {
      out = sb;
    } else if (sb.is_scalar()) {
      out = sa;
    } else {
      throw ShapeError("mul: operand shapes differ and neither is scalar");
    }
  }
  return emit(Node{OpKind::kMul, out, {a, b}, {}, "", 0.0});
}

NodeId Graph::neg(NodeId a) {
  check_id(a);
  return emit(Node{OpKind::kNeg, shape(a), {a}, {}, "", 0.0});
}

NodeId Graph::reciprocal(NodeId a) {
  check_id(a);
  return emit(Node{OpKind::kReciprocal, shape(a), {a}, {}, "", 0.0});
}

NodeId Graph::exp(NodeId a) {
  check_id(a);
  return emit(Node{OpKind::kExp, shape(a), {a}, {}, "", 0.0});
}

NodeId Graph::log(NodeId a) {
  check_id(a);
  return emit(Node{OpKind::kLog, shape(a), {a}, {}, "", 0.0});
}

NodeId Graph::tanh(NodeId a) {
  check_id(a);
  return emit(Node{OpKind::kTanh, shape(a), {a}, {}, "", 0.0});
}

NodeId Graph::relu(NodeId a) {
  check_id(a);
  return emit(Node{OpKind::kRelu, shape(a), {a}, {}, "", 0.0});
}

NodeId Graph::sigmoid(NodeId a) {
  check_id(a);
  return emit(Node{OpKind::kSigmoid, shape(a), {a}, {}, "", 0.0});
}

NodeId Graph::softplus(NodeId a) {
  check_id(a);
  return emit(Node{OpKind::kSoftplus, shape(a), {a}, {}, "", 0.0});
}

NodeId Graph::square(NodeId a) {
  check_id(a);
  return emit(Node{OpKind::kSquare, shape(a), {a}, {}, "", 0.0});
}

NodeId Graph::dot(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  Shape sa = shape(a), sb = shape(b);
  if (sa.is_scalar() && sb.is_scalar()) return mul(a, b);
  if (sa != sb) throw ShapeError("dot: operand shapes differ");
  return emit(Node{OpKind::kDot, Shape::scalar(), {a, b}, {}, "", 0.0});
}

NodeId Graph::affine(NodeId x, std::span<const NodeId> rows, NodeId bias) {
  check_id(x);
  check_id(bias);
  if (rows.empty()) throw ShapeError("affine: needs at least one row");
  const Shape sx = shape(x);
  if (!sx.is_vector()) throw ShapeError("affine: x must be a vector");
  const int k = static_cast<int>(rows.size());
  for (NodeId r : rows) {
    check_id(r);
    if (shape(r) != sx) throw ShapeError("affine: row length must match x");
  }
  if (shape(bias) != Shape::vector(k)) {
    throw ShapeError("affine: bias length must match row count");
  }
  std::vector<NodeId> in;
  in.reserve(rows.size() + 2);
  in.push_back(x);
  in.insert(in.end(), rows.begin(), rows.end());
  in.push_back(bias);
  return emit(
      Node{OpKind::kAffine, Shape::vector(k), std::move(in), {}, "", 0.0});
}

NodeId Graph::sum(NodeId a) {
  check_id(a);
  if (shape(a).is_scalar()) return a;
  return emit(Node{OpKind::kSum, Shape::scalar(), {a}, {}, "", 0.0});
}

NodeId Graph::norm_clip(NodeId h, double bound) {
  check_id(h);
  if (!shape(h).is_vector()) throw ShapeError("norm-clip: h must be a vector");
  if (!(bound > 0.0) || !std::isfinite(bound)) {
    throw InvalidArgumentError("norm-clip: bound must be positive and finite");
  }
  return emit(Node{OpKind::kNormClip, shape(h), {h}, {}, "", bound});
}

NodeId Graph::select_by_sign(NodeId cond, NodeId a, NodeId b) {
  check_id(cond);
  check_id(a);
  check_id(b);
  if (shape(a) != shape(b)) {
    throw ShapeError("select-by-sign: branch shapes differ");
  }
  if (!shape(cond).is_scalar() && shape(cond) != shape(a)) {
    throw ShapeError(
        "select-by-sign: cond must be scalar or match the branch shape");
  }
  return emit(
      Node{OpKind::kSelectBySign, shape(a), {cond, a, b}, {}, "", 0.0});
}

NodeId Graph::component(NodeId v, int i) {
  check_id(v);
  if (!shape(v).is_vector()) throw ShapeError("component: v must be a vector");
  return dot(v, basis(i, shape(v).len()));
}

NodeId Graph::pack(std::span<const NodeId> parts) {
  if (parts.empty()) throw ShapeError("pack: needs at least one part");
  const int len = static_cast<int>(parts.size());
  NodeId acc{};
  for (int i = 0; i < len; ++i) {
    check_id(parts[i]);
    if (!shape(parts[i]).is_scalar()) {
      throw ShapeError("pack: parts must be scalars");
    }
    NodeId term = mul(parts[i], basis(i, len));
    acc = (i == 0) ? term : add(acc, term);
  }
  return acc;
}

// --- Evaluation ---------------------------------------------------------

Evaluator::Evaluator(const Graph& g) : g_(&g) { sync(); }

void Evaluator::sync() {
  const std::size_t n = g_->size();
  if (n == synced_nodes_) return;
  offsets_.reserve(n);
  std::size_t total = buffer_.size();
  for (std::size_t i = synced_nodes_; i < n; ++i) {
    offsets_.push_back(total);
    total += g_->node({static_cast<std::uint32_t>(i)}).shape.size();
  }
  buffer_.resize(total);
  stamps_.resize(n, 0);
  is_bound_.resize(n, 0);
  synced_nodes_ = n;
}

void Evaluator::clear() {
  if (++epoch_ == 0) {
    std::fill(stamps_.begin(), stamps_.end(), 0);
    epoch_ = 1;
  }
  // Bindings survive; their slots still hold the bound values.
  for (std::uint32_t v : bound_vars_) stamps_[v] = epoch_;
}

void Evaluator::bind(NodeId var, double x) {
  sync();
  const Node& n = g_->node(var);
  if (n.kind != OpKind::kInput && n.kind != OpKind::kParam) {
    throw GraphError("bind: node is not a variable");
  }
  if (!n.shape.is_scalar()) {
    throw ShapeError("bind: scalar value for non-scalar variable " + n.name);
  }
  if (stamps_[var.index] == epoch_) clear();  // rebind invalidates memos
  out(var.index)[0] = x;
  stamps_[var.index] = epoch_;
  if (!is_bound_[var.index]) {
    is_bound_[var.index] = 1;
    bound_vars_.push_back(var.index);
  }
}

void Evaluator::bind(NodeId var, const Eigen::Ref<const Eigen::VectorXd>& x) {
  sync();
  const Node& n = g_->node(var);
  if (n.kind != OpKind::kInput && n.kind != OpKind::kParam) {
    throw GraphError("bind: node is not a variable");
  }
  if (!n.shape.is_vector() || n.shape.len() != x.size()) {
    throw ShapeError("bind: vector length mismatch for variable " + n.name);
  }
  if (stamps_[var.index] == epoch_) clear();  // rebind invalidates memos
  Eigen::Map<Eigen::VectorXd>(out(var.index), x.size()) = x;
  stamps_[var.index] = epoch_;
  if (!is_bound_[var.index]) {
    is_bound_[var.index] = 1;
    bound_vars_.push_back(var.index);
  }
}

void Evaluator::bind(std::string_view name, double x) {
  NodeId id = g_->find_variable(name);
  if (!id.valid()) throw GraphError("bind: no variable named " +
                                    std::string(name));
  bind(id, x);
}

void Evaluator::bind(std::string_view name,
                     const Eigen::Ref<const Eigen::VectorXd>& x) {
  NodeId id = g_->find_variable(name);
  if (!id.valid()) throw GraphError("bind: no variable named " +
                                    std::string(name));
  bind(id, x);
}

void Evaluator::bind(const Bindings& b) {
  for (const auto& [name, value] : b.map()) {
    NodeId id = g_->find_variable(name);
    if (!id.valid()) continue;
    if (value.shape().is_scalar()) {
      bind(id, value.as_scalar());
    } else {
      bind(id, value.as_vector());
    }
  }
}

void Evaluator::compute(std::uint32_t id) {
  const Node& n = g_->node({id});
  switch (n.kind) {
    case OpKind::kConstant:
      std::copy(n.payload.begin(), n.payload.end(), out(id));
      stamps_[id] = epoch_;
      return;
    case OpKind::kInput:
    case OpKind::kParam:
      throw UnboundVariableError(n.name);
    default:
      break;
  }
  std::vector<Arg> args;
  args.reserve(n.inputs.size());
  for (NodeId in_id : n.inputs) {
    args.push_back({in(in_id.index), g_->node(in_id).shape.size()});
  }
  double* o = out(id);
  compute_kernel(n, args, o);
  const int m = n.shape.size();
  for (int j = 0; j < m; ++j) {
    if (!std::isfinite(o[j])) {
      throw NonFiniteError(std::string("non-finite value from ") +
                           op_name(n.kind) + " node " + std::to_string(id));
    }
  }
  stamps_[id] = epoch_;
}

void Evaluator::run(std::uint32_t target) {
  sync();
  if (stamped(target)) return;
  stack_.clear();
  stack_.push_back({target, 0});
  while (!stack_.empty()) {
    Frame& fr = stack_.back();
    const std::uint32_t id = fr.id;
    if (stamped(id)) {
      stack_.pop_back();
      continue;
    }
    const Node& n = g_->node({id});
    const bool lazy_select = n.kind == OpKind::kSelectBySign &&
                             g_->node(n.inputs[0]).shape.is_scalar();
    if (lazy_select) {
      if (fr.phase == 0) {
        fr.phase = 1;
        stack_.push_back({n.inputs[0].index, 0});
      } else if (fr.phase == 1) {
        fr.phase = 2;
        const bool take_a = in(n.inputs[0].index)[0] > 0.0;
        stack_.push_back({n.inputs[take_a ? 1 : 2].index, 0});
      } else {
        const bool take_a = in(n.inputs[0].index)[0] > 0.0;
        std::copy_n(in(n.inputs[take_a ? 1 : 2].index), n.shape.size(),
                    out(id));
        stamps_[id] = epoch_;
        stack_.pop_back();
      }
      continue;
    }
    if (fr.phase == 0 && !n.inputs.empty()) {
      fr.phase = 1;
      for (NodeId in_id : n.inputs) {
        if (!stamped(in_id.index)) stack_.push_back({in_id.index, 0});
      }
      continue;
    }
    compute(id);
    stack_.pop_back();
  }
}

double Evaluator::scalar(NodeId id) {
  const Node& n = g_->node(id);
  if (!n.shape.is_scalar()) throw ShapeError("scalar: node is not scalar");
  run(id.index);
  return in(id.index)[0];
}

Eigen::VectorXd Evaluator::vector(NodeId id) {
  const Node& n = g_->node(id);
  if (!n.shape.is_vector()) throw ShapeError("vector: node is not a vector");
  run(id.index);
  return Eigen::Map<const Eigen::VectorXd>(in(id.index), n.shape.len());
}

Value Evaluator::value(NodeId id) {
  if (g_->node(id).shape.is_scalar()) return Value::scalar(scalar(id));
  return Value::vector(vector(id));
}

std::span<const double> Evaluator::slot(NodeId id) {
  const Node& n = g_->node(id);
  run(id.index);
  return {in(id.index), static_cast<std::size_t>(n.shape.size())};
}

Value eval(const Graph& g, NodeId root, const Bindings& b) {
  Evaluator ev(g);
  ev.bind(b);
  return ev.value(root);
}

double eval_scalar(const Graph& g, NodeId root, const Bindings& b) {
  Evaluator ev(g);
  ev.bind(b);
  return ev.scalar(root);
}

}  // namespace opvi

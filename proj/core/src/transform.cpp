// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiation as graph rewriting. Reverse mode walks node ids downward
// and accumulates adjoint expressions; forward mode walks upward and carries
// tangent expressions. Both only ever append nodes, so results of earlier
// transforms stay valid and transforms compose.

#include <vector>

#include "opvi/graph.hpp"

namespace opvi {
namespace {

// Jacobian-vector product of the norm-clip rescaling applied to v at h.
// Inside the ball the map is the identity; outside it is
// (B/r) (v - h (h.v) / r^2) with r = |h|. The clipped expression contains
// log(r^2), which the scalar-cond select leaves unevaluated when unclipped,
// so h = 0 stays safe.
NodeId clip_jvp(Graph& g, NodeId h, double bound, NodeId v) {
  NodeId r2 = g.dot(h, h);
  NodeId cond = g.sub(g.constant(bound * bound), r2);
  NodeId inv_r = g.exp(g.scale(-0.5, g.log(r2)));
  NodeId radial = g.mul(h, g.mul(g.dot(h, v), g.reciprocal(r2)));
  NodeId clipped = g.mul(g.scale(bound, inv_r), g.sub(v, radial));
  return g.select_by_sign(cond, v, clipped);
}

class ReverseSweep {
 public:
  ReverseSweep(Graph& g, NodeId root, std::span<const NodeId> wrt,
               std::span<const NodeId> stop_at)
      : g_(g), root_(root) {
    if (!g_.shape(root).is_scalar()) {
      throw GraphError("grad: differentiation root must be scalar");
    }
    adj_.resize(root.index + 1);
    stop_.resize(root.index + 1, 0);
    keep_.resize(root.index + 1, 0);
    for (NodeId s : stop_at) {
      g_.node(s);
      if (s.index <= root.index) stop_[s.index] = 1;
    }
    for (NodeId w : wrt) {
      g_.node(w);
      if (w.index <= root.index) keep_[w.index] = 1;
    }
  }

  std::vector<NodeId> run(std::span<const NodeId> wrt) {
    adj_[root_.index] = g_.constant(1.0);
    for (std::uint32_t id = root_.index + 1; id-- > 0;) {
      if (!adj_[id].valid() || stop_[id]) continue;
      propagate(id);
    }
    std::vector<NodeId> out;
    out.reserve(wrt.size());
    for (NodeId w : wrt) {
      if (w.index <= root_.index && adj_[w.index].valid()) {
        out.push_back(adj_[w.index]);
      } else {
        out.push_back(g_.zeros(g_.shape(w)));
      }
    }
    return out;
  }

 private:
  void accum(NodeId target, NodeId contrib) {
    // Adjoints of constants are dead unless explicitly requested.
    if (g_.node(target).kind == OpKind::kConstant && !keep_[target.index]) {
      return;
    }
    NodeId& slot = adj_[target.index];
    slot = slot.valid() ? g_.add(slot, contrib) : contrib;
  }

  void propagate(std::uint32_t id) {
    const Node n = g_.node({id});  // copy: emissions may relocate storage
    const NodeId self{id};
    const NodeId y = adj_[id];
    switch (n.kind) {
      case OpKind::kConstant:
      case OpKind::kInput:
      case OpKind::kParam:
        return;
      case OpKind::kAdd:
        accum(n.inputs[0], y);
        accum(n.inputs[1], y);
        return;
      case OpKind::kMul: {
        const NodeId a = n.inputs[0], b = n.inputs[1];
        if (g_.shape(a) == g_.shape(b)) {
          accum(a, g_.mul(y, b));
          accum(b, g_.mul(y, a));
        } else if (g_.shape(a).is_scalar()) {
          accum(a, g_.dot(y, b));
          accum(b, g_.mul(a, y));
        } else {
          accum(a, g_.mul(b, y));
          accum(b, g_.dot(y, a));
        }
        return;
      }
      case OpKind::kNeg:
        accum(n.inputs[0], g_.neg(y));
        return;
      case OpKind::kReciprocal:
        accum(n.inputs[0], g_.neg(g_.mul(y, g_.square(self))));
        return;
      case OpKind::kExp:
        accum(n.inputs[0], g_.mul(y, self));
        return;
      case OpKind::kLog:
        accum(n.inputs[0], g_.mul(y, g_.reciprocal(n.inputs[0])));
        return;
      case OpKind::kTanh:
        accum(n.inputs[0],
              g_.mul(y, g_.sub(g_.ones(n.shape), g_.square(self))));
        return;
      case OpKind::kRelu:
        accum(n.inputs[0],
              g_.select_by_sign(n.inputs[0], y, g_.zeros(n.shape)));
        return;
      case OpKind::kSigmoid:
        accum(n.inputs[0],
              g_.mul(y, g_.mul(self, g_.sub(g_.ones(n.shape), self))));
        return;
      case OpKind::kSoftplus:
        accum(n.inputs[0], g_.mul(y, g_.sigmoid(n.inputs[0])));
        return;
      case OpKind::kSquare:
        accum(n.inputs[0], g_.mul(y, g_.scale(2.0, n.inputs[0])));
        return;
      case OpKind::kDot:
        accum(n.inputs[0], g_.mul(y, n.inputs[1]));
        accum(n.inputs[1], g_.mul(y, n.inputs[0]));
        return;
      case OpKind::kAffine: {
        const NodeId x = n.inputs[0];
        const NodeId bias = n.inputs.back();
        const int k = static_cast<int>(n.inputs.size()) - 2;
        accum(bias, y);
        bool rows_const = true;
        for (int i = 0; i < k; ++i) {
          const NodeId row = n.inputs[1 + i];
          if (g_.node(row).kind != OpKind::kConstant) rows_const = false;
          accum(row, g_.mul(g_.component(y, i), x));
        }
        const int xlen = g_.shape(x).len();
        if (rows_const) {
          // x_bar = W^T y as one affine node over constant transposed rows.
          std::vector<NodeId> cols;
          cols.reserve(xlen);
          for (int j = 0; j < xlen; ++j) {
            Eigen::VectorXd col(k);
            for (int i = 0; i < k; ++i) {
              col[i] = g_.node(n.inputs[1 + i]).payload[j];
            }
            cols.push_back(g_.constant(col));
          }
          accum(x, g_.affine(y, cols, g_.zeros(Shape::vector(xlen))));
        } else {
          for (int i = 0; i < k; ++i) {
            accum(x, g_.mul(g_.component(y, i), n.inputs[1 + i]));
          }
        }
        return;
      }
      case OpKind::kSum:
        accum(n.inputs[0], g_.mul(y, g_.ones(g_.shape(n.inputs[0]))));
        return;
      case OpKind::kNormClip:
        accum(n.inputs[0], clip_jvp(g_, n.inputs[0], n.bound, y));
        return;
      case OpKind::kSelectBySign:
        accum(n.inputs[1], g_.select_by_sign(n.inputs[0], y,
                                             g_.zeros(n.shape)));
        accum(n.inputs[2], g_.select_by_sign(n.inputs[0], g_.zeros(n.shape),
                                             y));
        return;
    }
    throw GraphError("grad: unexpected node kind");
  }

  Graph& g_;
  NodeId root_;
  std::vector<NodeId> adj_;
  std::vector<char> stop_;
  std::vector<char> keep_;
};

}  // namespace

std::vector<NodeId> grad_multi(Graph& g, NodeId root,
                               std::span<const NodeId> wrt,
                               std::span<const NodeId> stop_at) {
  ReverseSweep sweep(g, root, wrt, stop_at);
  return sweep.run(wrt);
}

NodeId grad(Graph& g, NodeId root, NodeId wrt) {
  const NodeId w[] = {wrt};
  return grad_multi(g, root, w, {})[0];
}

NodeId tangent(Graph& g, NodeId root, NodeId z, NodeId seed) {
  g.node(root);
  if (g.shape(seed) != g.shape(z)) {
    throw GraphError("tangent: seed shape must match z");
  }
  if (root == z) return seed;
  if (root.index < z.index) return g.zeros(g.shape(root));

  std::vector<NodeId> tan(root.index + 1);
  tan[z.index] = seed;
  auto t = [&](NodeId in) { return tan[in.index]; };

  for (std::uint32_t id = z.index + 1; id <= root.index; ++id) {
    const Node n = g.node({id});
    const NodeId self{id};
    NodeId out{};
    auto push = [&](NodeId term) {
      out = out.valid() ? g.add(out, term) : term;
    };
    switch (n.kind) {
      case OpKind::kConstant:
      case OpKind::kInput:
      case OpKind::kParam:
        continue;
      case OpKind::kAdd:
        if (t(n.inputs[0]).valid()) push(t(n.inputs[0]));
        if (t(n.inputs[1]).valid()) push(t(n.inputs[1]));
        break;
      case OpKind::kMul:
        if (t(n.inputs[0]).valid()) push(g.mul(t(n.inputs[0]), n.inputs[1]));
        if (t(n.inputs[1]).valid()) push(g.mul(n.inputs[0], t(n.inputs[1])));
        break;
      case OpKind::kNeg:
        if (t(n.inputs[0]).valid()) push(g.neg(t(n.inputs[0])));
        break;
      case OpKind::kReciprocal:
        if (t(n.inputs[0]).valid()) {
          push(g.neg(g.mul(t(n.inputs[0]), g.square(self))));
        }
        break;
      case OpKind::kExp:
        if (t(n.inputs[0]).valid()) push(g.mul(t(n.inputs[0]), self));
        break;
      case OpKind::kLog:
        if (t(n.inputs[0]).valid()) {
          push(g.mul(t(n.inputs[0]), g.reciprocal(n.inputs[0])));
        }
        break;
      case OpKind::kTanh:
        if (t(n.inputs[0]).valid()) {
          push(g.mul(t(n.inputs[0]),
                     g.sub(g.ones(n.shape), g.square(self))));
        }
        break;
      case OpKind::kRelu:
        if (t(n.inputs[0]).valid()) {
          push(g.select_by_sign(n.inputs[0], t(n.inputs[0]),
                                g.zeros(n.shape)));
        }
        break;
      case OpKind::kSigmoid:
        if (t(n.inputs[0]).valid()) {
          push(g.mul(t(n.inputs[0]),
                     g.mul(self, g.sub(g.ones(n.shape), self))));
        }
        break;
      case OpKind::kSoftplus:
        if (t(n.inputs[0]).valid()) {
          push(g.mul(t(n.inputs[0]), g.sigmoid(n.inputs[0])));
        }
        break;
      case OpKind::kSquare:
        if (t(n.inputs[0]).valid()) {
          push(g.mul(t(n.inputs[0]), g.scale(2.0, n.inputs[0])));
        }
        break;
      case OpKind::kDot:
        if (t(n.inputs[0]).valid()) push(g.dot(t(n.inputs[0]), n.inputs[1]));
        if (t(n.inputs[1]).valid()) push(g.dot(n.inputs[0], t(n.inputs[1])));
        break;
      case OpKind::kAffine: {
        const NodeId x = n.inputs[0];
        const int k = static_cast<int>(n.inputs.size()) - 2;
        if (t(x).valid()) {
          std::vector<NodeId> rows(n.inputs.begin() + 1,
                                   n.inputs.end() - 1);
          push(g.affine(t(x), rows, g.zeros(Shape::vector(k))));
        }
        for (int i = 0; i < k; ++i) {
          if (t(n.inputs[1 + i]).valid()) {
            push(g.mul(g.dot(t(n.inputs[1 + i]), x), g.basis(i, k)));
          }
        }
        if (t(n.inputs.back()).valid()) push(t(n.inputs.back()));
        break;
      }
      case OpKind::kSum:
        if (t(n.inputs[0]).valid()) push(g.sum(t(n.inputs[0])));
        break;
      case OpKind::kNormClip:
        if (t(n.inputs[0]).valid()) {
          push(clip_jvp(g, n.inputs[0], n.bound, t(n.inputs[0])));
        }
        break;
      case OpKind::kSelectBySign: {
        const NodeId ta = t(n.inputs[1]), tb = t(n.inputs[2]);
        if (ta.valid() || tb.valid()) {
          push(g.select_by_sign(n.inputs[0],
                                ta.valid() ? ta : g.zeros(n.shape),
                                tb.valid() ? tb : g.zeros(n.shape)));
        }
        break;
      }
    }
    if (out.valid()) tan[id] = out;
  }
  return tan[root.index].valid() ? tan[root.index]
                                 : g.zeros(g.shape(root));
}

NodeId divergence(Graph& g, NodeId f, NodeId z) {
  const Shape sf = g.shape(f);
  if (!sf.is_vector() || g.shape(z) != sf) {
    throw GraphError("divergence: f and z must be vectors of equal length");
  }
  const int d = sf.len();
  NodeId acc{};
  for (int i = 0; i < d; ++i) {
    NodeId ti = tangent(g, f, z, g.basis(i, d));
    NodeId ci = g.component(ti, i);
    acc = acc.valid() ? g.add(acc, ci) : ci;
  }
  return acc;
}

}  // namespace opvi

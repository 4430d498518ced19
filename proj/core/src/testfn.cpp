// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#include "opvi/testfn.hpp"

#include <cmath>

#include "opvi/errors.hpp"

namespace opvi {

NodeId clip_bound(Graph& g, NodeId h, double bound, BoundKind kind) {
  switch (kind) {
    case BoundKind::kLayerNorm:
      return g.norm_clip(h, bound);
    case BoundKind::kUnitClamp: {
      // u - relu(u - B) + relu(-u - B) clamps each unit into [-B, B].
      NodeId bvec = g.constant(
          Eigen::VectorXd::Constant(g.shape(h).len(), bound));
      NodeId over = g.relu(g.sub(h, bvec));
      NodeId under = g.relu(g.sub(g.neg(h), bvec));
      return g.add(g.sub(h, over), under);
    }
  }
  throw InvalidArgumentError("clip_bound: unknown bound kind");
}

BoundedMlp::BoundedMlp(int dim, double bound, BoundKind kind, int hidden)
    : dim_(dim), bound_(bound), kind_(kind),
      hidden_(hidden > 0 ? hidden : 2 * dim) {
  if (dim < 1) throw InvalidArgumentError("BoundedMlp: dim must be >= 1");
  if (!(bound > 0.0)) {
    throw InvalidArgumentError("BoundedMlp: bound must be positive");
  }
}

std::vector<ParamSpec> BoundedMlp::param_spec() const {
  std::vector<ParamSpec> spec;
  auto layer = [&spec](const std::string& tag, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
      spec.push_back({"f_w" + tag + "_" + std::to_string(r),
                      Shape::vector(cols)});
    }
    spec.push_back({"f_b" + tag, Shape::vector(rows)});
  };
  layer("1", hidden_, dim_);
  layer("2", hidden_, hidden_);
  layer("3", hidden_, hidden_);
  layer("4", dim_, hidden_);
  return spec;
}

ParamSet BoundedMlp::init_params(RngStream& rng) const {
  ParamSet p(param_spec());
  auto glorot = [&rng, &p](const std::string& tag, int rows, int cols) {
    const double limit = std::sqrt(6.0 / (rows + cols));
    for (int r = 0; r < rows; ++r) {
      Eigen::VectorXd w(cols);
      for (int c = 0; c < cols; ++c) {
        w[c] = limit * (2.0 * rng.uniform() - 1.0);
      }
      p.slot("f_w" + tag + "_" + std::to_string(r)) = w;
    }
  };
  glorot("1", hidden_, dim_);
  glorot("2", hidden_, hidden_);
  glorot("3", hidden_, hidden_);
  glorot("4", dim_, hidden_);
  return p;
}

NodeId BoundedMlp::apply(Graph& g, NodeId z) const {
  if (g.shape(z) != Shape::vector(dim_)) {
    throw ShapeError("BoundedMlp::apply: z has wrong shape");
  }
  auto layer_rows = [&g](const std::string& tag, int rows, int cols) {
    std::vector<NodeId> ids;
    ids.reserve(rows);
    for (int r = 0; r < rows; ++r) {
      ids.push_back(g.param("f_w" + tag + "_" + std::to_string(r),
                            Shape::vector(cols)));
    }
    return ids;
  };
  NodeId h = z;
  const std::string tags[] = {"1", "2", "3"};
  int cols = dim_;
  for (const auto& tag : tags) {
    NodeId pre = g.affine(h, layer_rows(tag, hidden_, cols),
                          g.param("f_b" + tag, Shape::vector(hidden_)));
    h = clip_bound(g, g.tanh(pre), bound_, kind_);
    cols = hidden_;
  }
  return g.affine(h, layer_rows("4", dim_, hidden_),
                  g.param("f_b4", Shape::vector(dim_)));
}

}  // namespace opvi

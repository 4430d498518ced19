// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "opvi/graph.hpp"
#include "opvi/rng.hpp"
#include "opvi/variational.hpp"

namespace opvi {

/// How a test function keeps its hidden layers bounded.
enum class BoundKind {
  kLayerNorm,  // rescale each hidden layer onto the L2 ball of radius B
  kUnitClamp,  // clamp each hidden unit into [-B, B]
};

/// Applies the chosen bound to a hidden-layer vector.
NodeId clip_bound(Graph& g, NodeId h, double bound, BoundKind kind);

/// Vector-valued test function f: R^d -> R^d with graph-level application,
/// so it can be applied to a latent input variable or directly to the
/// output of a reparameterization graph. Parameters are declared as "f_"
/// prefixed param variables, keeping them disjoint from family parameters.
class TestFunction {
 public:
  virtual ~TestFunction() = default;

  virtual int dim() const = 0;
  virtual std::vector<ParamSpec> param_spec() const = 0;
  virtual ParamSet init_params(RngStream& rng) const = 0;

  /// Builds f(z) on top of the given vector node; returns a vector node of
  /// length dim().
  virtual NodeId apply(Graph& g, NodeId z) const = 0;
};

/// Three tanh hidden layers of configurable width (default 2d), each kept
/// inside a bound, followed by an unbounded affine output layer.
class BoundedMlp : public TestFunction {
 public:
  explicit BoundedMlp(int dim, double bound = 2.0,
                      BoundKind kind = BoundKind::kLayerNorm, int hidden = 0);

  int dim() const override { return dim_; }
  int hidden_dim() const { return hidden_; }
  double bound() const { return bound_; }
  BoundKind bound_kind() const { return kind_; }

  std::vector<ParamSpec> param_spec() const override;
  ParamSet init_params(RngStream& rng) const override;
  NodeId apply(Graph& g, NodeId z) const override;

 private:
  int dim_;
  double bound_;
  BoundKind kind_;
  int hidden_;
};

}  // namespace opvi

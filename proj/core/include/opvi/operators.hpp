// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <span>

#include "opvi/graph.hpp"
#include "opvi/models.hpp"
#include "opvi/testfn.hpp"
#include "opvi/variational.hpp"

namespace opvi {

enum class OperatorKind {
  kLangevinStein,
  kKl,
  kRenyiAlpha,  // named variant, not specified here
  kChi,         // named variant, not specified here
};

/// Distance applied to the expected operator value in the outer objective.
enum class DistanceKind {
  kSquare,    // t(a) = a^2; needs two independent sample means
  kIdentity,  // t(a) = a
};

/// An operator together with its canonical distance, plus the compatibility
/// rules between operator, family, and test function.
struct OperatorObjective {
  OperatorKind op;
  DistanceKind distance;

  /// Derives the canonical distance for the operator. Named-but-unspecified
  /// variants are rejected here.
  explicit OperatorObjective(OperatorKind kind);

  static OperatorObjective langevin_stein() {
    return OperatorObjective(OperatorKind::kLangevinStein);
  }
  static OperatorObjective kl() { return OperatorObjective(OperatorKind::kKl); }

  bool needs_test_function() const {
    return op == OperatorKind::kLangevinStein;
  }
  bool needs_density() const { return op == OperatorKind::kKl; }

  /// Validates the (operator, family, test function) combination. A test
  /// function passed alongside KL is allowed and simply receives zero
  /// gradients; a missing one under Langevin-Stein is an error.
  void check_compatible(const VariationalFamily& family,
                        const TestFunction* f) const;
};

/// Langevin-Stein operator value (O f)(z) = grad_z log p(x,z) . f(z) +
/// div f(z), built on top of an arbitrary latent node. A non-empty batch
/// uses the model's subsampled log joint instead of the full one.
NodeId apply_ls(Graph& g, const Model& model, const TestFunction& f, NodeId z,
                std::span<const int> batch = {});

/// Integrand of the KL objective, log q(z; lambda) - log p(x, z).
NodeId apply_kl(Graph& g, const Model& model, const VariationalFamily& family,
                NodeId z, std::span<const int> batch = {});

/// Stein-type operator for a distribution on {0, ..., c} given positive
/// (not necessarily normalized) weights: (O f)(z) = (f(z+1) w(z+1) -
/// f(z) w(z)) / w(z) with f(0) = 0 and f(c+1) taken as 0. Returns the
/// operator values on the whole support; their w-expectation telescopes to
/// zero exactly.
Eigen::VectorXd apply_discrete(const Eigen::VectorXd& weights,
                               const Eigen::VectorXd& f);

/// Objective estimate from per-sample operator values. Square distance
/// multiplies the two set means (unbiased when the sets are independent;
/// pass one set twice for the biased single-set variant). Identity distance
/// pools both sets into one mean.
double objective_estimate(std::span<const double> set_a,
                          std::span<const double> set_b, DistanceKind distance);

}  // namespace opvi

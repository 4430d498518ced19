// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#include "opvi/operators.hpp"

#include <cmath>

#include "opvi/errors.hpp"

namespace opvi {

OperatorObjective::OperatorObjective(OperatorKind kind) : op(kind) {
  switch (kind) {
    case OperatorKind::kLangevinStein:
      distance = DistanceKind::kSquare;
      return;
    case OperatorKind::kKl:
      distance = DistanceKind::kIdentity;
      return;
    case OperatorKind::kRenyiAlpha:
      throw NotImplementedError("Renyi-alpha operator variant is not defined");
    case OperatorKind::kChi:
      throw NotImplementedError("chi-squared operator variant is not defined");
  }
  throw InvalidArgumentError("unknown operator kind");
}

void OperatorObjective::check_compatible(const VariationalFamily& family,
                                         const TestFunction* f) const {
  if (needs_test_function() && f == nullptr) {
    throw IncompatibleError("Langevin-Stein objective needs a test function");
  }
  if (f != nullptr && f->dim() != family.latent_dim()) {
    throw IncompatibleError("test function dimension differs from family");
  }
  if (needs_density() && !family.has_density()) {
    throw IncompatibleError(
        "KL objective needs a variational family with a log density");
  }
}

NodeId apply_ls(Graph& g, const Model& model, const TestFunction& f, NodeId z,
                std::span<const int> batch) {
  if (model.latent_dim() != f.dim()) {
    throw IncompatibleError("test function dimension differs from model");
  }
  NodeId logp = batch.empty() ? model.log_joint_graph(g, z)
                              : model.subsampled_log_joint(g, z, batch);
  NodeId score = grad(g, logp, z);
  NodeId fz = f.apply(g, z);
  NodeId div = divergence(g, fz, z);
  return g.add(g.dot(score, fz), div);
}

NodeId apply_kl(Graph& g, const Model& model, const VariationalFamily& family,
                NodeId z, std::span<const int> batch) {
  if (model.latent_dim() != family.latent_dim()) {
    throw IncompatibleError("family dimension differs from model");
  }
  NodeId logq = family.log_density_graph(g, z);
  NodeId logp = batch.empty() ? model.log_joint_graph(g, z)
                              : model.subsampled_log_joint(g, z, batch);
  return g.sub(logq, logp);
}

Eigen::VectorXd apply_discrete(const Eigen::VectorXd& weights,
                               const Eigen::VectorXd& f) {
  const Eigen::Index n = weights.size();
  if (n < 1) throw InvalidArgumentError("apply_discrete: empty support");
  if (f.size() != n) {
    throw InvalidArgumentError("apply_discrete: f length must match support");
  }
  if (f[0] != 0.0) {
    throw InvalidArgumentError("apply_discrete: f(0) must be zero");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(weights[i] > 0.0)) {
      throw InvalidArgumentError(
          "apply_discrete: weights must be strictly positive");
    }
  }
  Eigen::VectorXd out(n);
  for (Eigen::Index zi = 0; zi < n; ++zi) {
    const double up = (zi + 1 < n) ? f[zi + 1] * weights[zi + 1] : 0.0;
    out[zi] = (up - f[zi] * weights[zi]) / weights[zi];
  }
  return out;
}

double objective_estimate(std::span<const double> set_a,
                          std::span<const double> set_b,
                          DistanceKind distance) {
  if (set_a.empty() || set_b.empty()) {
    throw InvalidArgumentError("objective_estimate: empty sample set");
  }
  auto mean = [](std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
  };
  switch (distance) {
    case DistanceKind::kSquare:
      return mean(set_a) * mean(set_b);
    case DistanceKind::kIdentity: {
      if (set_a.data() == set_b.data() && set_a.size() == set_b.size()) {
        return mean(set_a);
      }
      double s = 0.0;
      for (double x : set_a) s += x;
      for (double x : set_b) s += x;
      return s / static_cast<double>(set_a.size() + set_b.size());
    }
  }
  throw InvalidArgumentError("objective_estimate: unknown distance");
}

}  // namespace opvi

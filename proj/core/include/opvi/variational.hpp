// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <string>
#include <string_view>
#include <vector>

#include "opvi/graph.hpp"
#include "opvi/rng.hpp"

namespace opvi {

struct ParamSpec {
  std::string name;
  Shape shape;
};

/// Ordered parameter values matching a ParamSpec list. Slots are addressed
/// by name; the whole set flattens to one vector for optimizer updates
/// (concatenation in spec order, scalars as length-1 segments).
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::vector<ParamSpec> spec);

  const std::vector<ParamSpec>& spec() const { return spec_; }
  int flat_size() const { return flat_size_; }

  Eigen::VectorXd& slot(std::string_view name);
  const Eigen::VectorXd& slot(std::string_view name) const;
  double scalar(std::string_view name) const { return slot(name)[0]; }

  Eigen::VectorXd flat() const;
  void set_flat(const Eigen::Ref<const Eigen::VectorXd>& v);

  /// Binds every slot whose name is a variable of the evaluator's graph.
  void bind(Evaluator& ev) const;

 private:
  int find(std::string_view name) const;

  std::vector<ParamSpec> spec_;
  std::vector<Eigen::VectorXd> values_;
  int flat_size_ = 0;
};

/// A variational family q(z; lambda). Families always provide a sampler in
/// reparameterized form z = R(eps; lambda) as a graph over the noise input
/// "eps" and parameter variables named per param_spec(); a log density is
/// optional, and families without one ("variational programs") can still be
/// fit with operator objectives that never query q's density.
class VariationalFamily {
 public:
  virtual ~VariationalFamily() = default;

  virtual int latent_dim() const = 0;
  virtual int noise_dim() const = 0;
  virtual std::vector<ParamSpec> param_spec() const = 0;
  virtual ParamSet init_params(RngStream& rng) const = 0;

  /// Appends z = R(eps; lambda) to g; returns the z node, a vector of
  /// length latent_dim().
  virtual NodeId reparam_graph(Graph& g) const = 0;

  virtual bool has_density() const = 0;
  /// log q(z; lambda) on top of an arbitrary latent node.
  virtual NodeId log_density_graph(Graph& g, NodeId z) const;
  /// Convenience: over the input variable "z".
  NodeId log_density_graph(Graph& g) const {
    return log_density_graph(g, g.input("z", Shape::vector(latent_dim())));
  }

  /// Gradient graphs of log q(z) with respect to each parameter, in spec
  /// order, over the input variable "z". Requires a density.
  std::vector<NodeId> score_graphs(Graph& g) const;

  /// One draw of z. Convenience wrapper over the reparam graph; loops
  /// should use Sampler instead.
  Eigen::VectorXd sample(const ParamSet& params, RngStream& rng) const;
};

/// Reusable numeric sampler for one family: builds the reparam graph once.
class Sampler {
 public:
  explicit Sampler(const VariationalFamily& family);

  Eigen::VectorXd draw(const ParamSet& params, RngStream& rng);
  Eigen::VectorXd draw_with_eps(const ParamSet& params,
                                const Eigen::Ref<const Eigen::VectorXd>& eps);

 private:
  Graph g_;
  NodeId z_;
  Evaluator ev_;
  int noise_dim_;
};

/// Fully factorized Gaussian, sigma = softplus(rho) per coordinate.
/// Parameters: "mu" and "rho", both vectors of length d.
class MeanFieldGaussian : public VariationalFamily {
 public:
  explicit MeanFieldGaussian(int dim, double init_mean = 0.0,
                             double init_stddev = 1.0);

  int latent_dim() const override { return dim_; }
  int noise_dim() const override { return dim_; }
  std::vector<ParamSpec> param_spec() const override;
  ParamSet init_params(RngStream& rng) const override;
  NodeId reparam_graph(Graph& g) const override;
  bool has_density() const override { return true; }
  NodeId log_density_graph(Graph& g, NodeId z) const override;
  using VariationalFamily::log_density_graph;

  /// Current standard deviations softplus(rho).
  static Eigen::VectorXd stddev(const ParamSet& params);
  static Eigen::VectorXd mean(const ParamSet& params);

 private:
  int dim_;
  double init_mean_, init_stddev_;
};

/// Density-free variational program: noise pushed through a small ReLU
/// network, z = W3 relu(W2 relu(W1 eps + b1) + b2) + b3. Parameters are the
/// row vectors "w{L}_{r}" and biases "b{L}".
class VariationalProgram : public VariationalFamily {
 public:
  explicit VariationalProgram(int dim, int hidden = 0);  // 0 = 2 * dim

  int latent_dim() const override { return dim_; }
  int noise_dim() const override { return dim_; }
  int hidden_dim() const { return hidden_; }
  std::vector<ParamSpec> param_spec() const override;
  ParamSet init_params(RngStream& rng) const override;
  NodeId reparam_graph(Graph& g) const override;
  bool has_density() const override { return false; }

 private:
  int dim_;
  int hidden_;
};

/// One-dimensional density-free program with disconnected support: a
/// positive branch softplus(a1 eps1 + b1) and a mirrored negative branch
/// -softplus(a2 eps2 + b2), gated by the sign of a third noise coordinate.
/// The gate is not differentiated. Parameters: scalars "a1","b1","a2","b2".
/// Branches start centered on +-init_center with unit slope; starting them
/// in the low-density region between the centers instead drowns the early
/// gradient signal in noise.
class SignSplitProgram : public VariationalFamily {
 public:
  explicit SignSplitProgram(double init_center = 3.0);

  int latent_dim() const override { return 1; }
  int noise_dim() const override { return 3; }
  std::vector<ParamSpec> param_spec() const override;
  ParamSet init_params(RngStream& rng) const override;
  NodeId reparam_graph(Graph& g) const override;
  bool has_density() const override { return false; }

 private:
  double init_center_;
};

}  // namespace opvi

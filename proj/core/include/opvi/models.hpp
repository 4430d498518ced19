// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <span>

#include "opvi/graph.hpp"

namespace opvi {

/// A target distribution exposing its (unnormalized) log joint density as an
/// expression graph over the latent input variable "z", a vector of length
/// latent_dim(). Any observed data is baked into the graph as constants, so
/// one model instance corresponds to one inference problem.
class Model {
 public:
  virtual ~Model() = default;

  virtual int latent_dim() const = 0;

  /// Appends log p(x, z) on top of an arbitrary latent node (an input
  /// variable, or the output of a reparameterization graph) and returns the
  /// scalar root.
  virtual NodeId log_joint_graph(Graph& g, NodeId z) const = 0;

  /// Convenience: builds over the input variable "z".
  NodeId log_joint_graph(Graph& g) const {
    return log_joint_graph(g, g.input("z", Shape::vector(latent_dim())));
  }

  /// Number of exchangeable likelihood terms; 0 when the joint does not
  /// decompose over datapoints.
  virtual int num_datapoints() const { return 0; }

  /// Unbiased subsampled estimate of the log joint:
  /// log prior + (n / |batch|) * sum_{i in batch} loglik_i.
  /// Batch indices must be distinct and in [0, num_datapoints()).
  NodeId subsampled_log_joint(Graph& g, NodeId z,
                              std::span<const int> batch) const;
  NodeId subsampled_log_joint(Graph& g, std::span<const int> batch) const {
    return subsampled_log_joint(g, g.input("z", Shape::vector(latent_dim())),
                                batch);
  }

 protected:
  /// Pieces backing subsampled_log_joint for decomposable models.
  virtual NodeId prior_graph(Graph& g, NodeId z) const;
  virtual NodeId datapoint_term(Graph& g, NodeId z, int i) const;
};

/// Diagonal Gaussian with an arbitrary additive log offset. Useful as an
/// exactly solvable target and as a stand-in for conjugate posteriors.
class GaussianTarget : public Model {
 public:
  GaussianTarget(int dim, double mean = 0.0, double stddev = 1.0,
                 double log_offset = 0.0);
  GaussianTarget(Eigen::VectorXd mean, Eigen::VectorXd stddev,
                 double log_offset = 0.0);

  int latent_dim() const override;
  NodeId log_joint_graph(Graph& g, NodeId z) const override;
  using Model::log_joint_graph;

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& stddev() const { return stddev_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd stddev_;
  double log_offset_;
};

/// Equal-weight mixture of two unit-variance-scaled Gaussians on the line,
/// p(z) = (N(z; m1, s^2) + N(z; m2, s^2)) / 2, with a log density built in
/// max/softplus form so neither component underflows.
class MixtureTarget : public Model {
 public:
  explicit MixtureTarget(double mean1 = -3.0, double mean2 = 3.0,
                         double stddev = 1.0);

  int latent_dim() const override { return 1; }
  NodeId log_joint_graph(Graph& g, NodeId z) const override;
  using Model::log_joint_graph;

  /// Closed-form log density, for plots and cross-checks.
  double log_density(double z) const;

  double mean1() const { return m1_; }
  double mean2() const { return m2_; }
  double stddev() const { return sd_; }

 private:
  double m1_, m2_, sd_;
};

/// Factor analysis with logistic-Bernoulli observations for one image:
/// z ~ N(0, I_K), x_p ~ Bernoulli(sigmoid(w_p . z + b_p)) where w_p is
/// column p of the weight matrix. An optional observation mask restricts
/// the likelihood to a subset of pixels (1 = observed).
class LogisticFactorAnalysis : public Model {
 public:
  LogisticFactorAnalysis(Eigen::MatrixXd weights, Eigen::VectorXd bias,
                         Eigen::VectorXd x,
                         Eigen::VectorXd mask = Eigen::VectorXd());

  int latent_dim() const override;
  NodeId log_joint_graph(Graph& g, NodeId z) const override;
  using Model::log_joint_graph;

  int num_pixels() const { return static_cast<int>(weights_.cols()); }
  const Eigen::MatrixXd& weights() const { return weights_; }
  const Eigen::VectorXd& bias() const { return bias_; }

 private:
  Eigen::MatrixXd weights_;  // K x P
  Eigen::VectorXd bias_;     // P
  Eigen::VectorXd x_;        // P, binary
  Eigen::VectorXd mask_;     // P, binary; empty = all observed
};

/// Two-level normal chain used to exercise datapoint subsampling:
/// beta ~ N(0,1), z_i ~ N(beta, 1), y_i ~ N(z_i, 1). The latent vector
/// stacks (beta, z_1, ..., z_n).
class HierarchicalToy : public Model {
 public:
  explicit HierarchicalToy(Eigen::VectorXd y);

  int latent_dim() const override;
  int num_datapoints() const override;
  NodeId log_joint_graph(Graph& g, NodeId z) const override;
  using Model::log_joint_graph;

 protected:
  NodeId prior_graph(Graph& g, NodeId z) const override;
  NodeId datapoint_term(Graph& g, NodeId z, int i) const override;

 private:
  Eigen::VectorXd y_;
};

}  // namespace opvi

// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#include "opvi/models.hpp"

#include <cmath>
#include <vector>

#include "opvi/errors.hpp"

namespace opvi {
namespace {

const double kLog2Pi = std::log(8.0 * std::atan(1.0));

void check_binary(const Eigen::VectorXd& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0 && v[i] != 1.0) {
      throw InvalidArgumentError(std::string(what) + " must be 0/1 valued");
    }
  }
}

}  // namespace

NodeId Model::prior_graph(Graph&, NodeId) const {
  throw IncompatibleError("model likelihood does not decompose over datapoints");
}

NodeId Model::datapoint_term(Graph&, NodeId, int) const {
  throw IncompatibleError("model likelihood does not decompose over datapoints");
}

NodeId Model::subsampled_log_joint(Graph& g, NodeId z,
                                   std::span<const int> batch) const {
  const int n = num_datapoints();
  if (n == 0) {
    throw IncompatibleError(
        "model likelihood does not decompose over datapoints");
  }
  if (batch.empty()) {
    throw InvalidArgumentError("subsampled_log_joint: empty batch");
  }
  std::vector<char> seen(n, 0);
  for (int i : batch) {
    if (i < 0 || i >= n) {
      throw InvalidArgumentError("subsampled_log_joint: index out of range");
    }
    if (seen[i]++) {
      throw InvalidArgumentError("subsampled_log_joint: duplicate index");
    }
  }
  if (g.shape(z) != Shape::vector(latent_dim())) {
    throw ShapeError("subsampled_log_joint: z has wrong shape");
  }
  NodeId lik{};
  for (int i : batch) {
    NodeId t = datapoint_term(g, z, i);
    lik = lik.valid() ? g.add(lik, t) : t;
  }
  const double scale = static_cast<double>(n) / static_cast<double>(batch.size());
  return g.add(prior_graph(g, z), g.scale(scale, lik));
}

// --- GaussianTarget -----------------------------------------------------

GaussianTarget::GaussianTarget(int dim, double mean, double stddev,
                               double log_offset)
    : GaussianTarget(Eigen::VectorXd::Constant(dim, mean),
                     Eigen::VectorXd::Constant(dim, stddev), log_offset) {}

GaussianTarget::GaussianTarget(Eigen::VectorXd mean, Eigen::VectorXd stddev,
                               double log_offset)
    : mean_(std::move(mean)), stddev_(std::move(stddev)),
      log_offset_(log_offset) {
  if (mean_.size() < 1 || mean_.size() != stddev_.size()) {
    throw InvalidArgumentError("GaussianTarget: mean/stddev size mismatch");
  }
  if ((stddev_.array() <= 0.0).any()) {
    throw InvalidArgumentError("GaussianTarget: stddev must be positive");
  }
}

int GaussianTarget::latent_dim() const {
  return static_cast<int>(mean_.size());
}

NodeId GaussianTarget::log_joint_graph(Graph& g, NodeId z) const {
  const int d = latent_dim();
  if (g.shape(z) != Shape::vector(d)) {
    throw ShapeError("GaussianTarget: z has wrong shape");
  }
  NodeId resid = g.sub(z, g.constant(mean_));
  NodeId scaled = g.mul(resid, g.constant(stddev_.cwiseInverse().eval()));
  const double c0 = log_offset_ - stddev_.array().log().sum() -
                    0.5 * d * kLog2Pi;
  return g.add(g.constant(c0), g.scale(-0.5, g.dot(scaled, scaled)));
}

// --- MixtureTarget ------------------------------------------------------

MixtureTarget::MixtureTarget(double mean1, double mean2, double stddev)
    : m1_(mean1), m2_(mean2), sd_(stddev) {
  if (!(stddev > 0.0)) {
    throw InvalidArgumentError("MixtureTarget: stddev must be positive");
  }
}

NodeId MixtureTarget::log_joint_graph(Graph& g, NodeId z) const {
  if (g.shape(z) != Shape::vector(1)) {
    throw ShapeError("MixtureTarget: z has wrong shape");
  }
  NodeId z0 = g.component(z, 0);
  const double inv_two_var = 1.0 / (2.0 * sd_ * sd_);
  NodeId a = g.scale(-inv_two_var, g.square(g.sub(z0, g.constant(m1_))));
  NodeId b = g.scale(-inv_two_var, g.square(g.sub(z0, g.constant(m2_))));
  // log(e^a + e^b)/2 = max(a,b) + softplus(-|a - b|) - log 2; half-weights
  // and the Gaussian normalizer fold into one constant.
  NodeId diff = g.sub(a, b);
  NodeId absd = g.select_by_sign(diff, diff, g.neg(diff));
  NodeId maxab = g.select_by_sign(diff, a, b);
  const double c0 = -std::log(2.0) - std::log(sd_) - 0.5 * kLog2Pi;
  return g.add(g.add(maxab, g.softplus(g.neg(absd))), g.constant(c0));
}

double MixtureTarget::log_density(double z) const {
  const double inv_two_var = 1.0 / (2.0 * sd_ * sd_);
  const double a = -inv_two_var * (z - m1_) * (z - m1_);
  const double b = -inv_two_var * (z - m2_) * (z - m2_);
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b))) - std::log(2.0) -
         std::log(sd_) - 0.5 * kLog2Pi;
}

// --- LogisticFactorAnalysis ---------------------------------------------

LogisticFactorAnalysis::LogisticFactorAnalysis(Eigen::MatrixXd weights,
                                               Eigen::VectorXd bias,
                                               Eigen::VectorXd x,
                                               Eigen::VectorXd mask)
    : weights_(std::move(weights)), bias_(std::move(bias)), x_(std::move(x)),
      mask_(std::move(mask)) {
  const auto P = weights_.cols();
  if (weights_.rows() < 1 || P < 1) {
    throw InvalidArgumentError("LogisticFactorAnalysis: empty weights");
  }
  if (bias_.size() != P || x_.size() != P) {
    throw InvalidArgumentError(
        "LogisticFactorAnalysis: bias/x length must equal pixel count");
  }
  check_binary(x_, "LogisticFactorAnalysis: x");
  if (mask_.size() != 0) {
    if (mask_.size() != P) {
      throw InvalidArgumentError(
          "LogisticFactorAnalysis: mask length must equal pixel count");
    }
    check_binary(mask_, "LogisticFactorAnalysis: mask");
  }
}

int LogisticFactorAnalysis::latent_dim() const {
  return static_cast<int>(weights_.rows());
}

NodeId LogisticFactorAnalysis::log_joint_graph(Graph& g, NodeId z) const {
  const int K = latent_dim();
  const int P = num_pixels();
  if (g.shape(z) != Shape::vector(K)) {
    throw ShapeError("LogisticFactorAnalysis: z has wrong shape");
  }

  std::vector<NodeId> rows;
  rows.reserve(P);
  for (int p = 0; p < P; ++p) {
    rows.push_back(g.constant(weights_.col(p).eval()));
  }
  NodeId logits = g.affine(z, rows, g.constant(bias_));

  // Bernoulli log likelihood x.a - softplus(a) per pixel, masked if asked.
  NodeId lik{};
  if (mask_.size() == 0) {
    lik = g.sub(g.dot(g.constant(x_), logits), g.sum(g.softplus(logits)));
  } else {
    Eigen::VectorXd mx = (mask_.array() * x_.array()).matrix();
    lik = g.sub(g.dot(g.constant(mx), logits),
                g.dot(g.constant(mask_), g.softplus(logits)));
  }
  NodeId prior = g.add(g.constant(-0.5 * K * kLog2Pi),
                       g.scale(-0.5, g.dot(z, z)));
  return g.add(prior, lik);
}

// --- HierarchicalToy ----------------------------------------------------

HierarchicalToy::HierarchicalToy(Eigen::VectorXd y) : y_(std::move(y)) {
  if (y_.size() < 1) {
    throw InvalidArgumentError("HierarchicalToy: needs at least one datapoint");
  }
}

int HierarchicalToy::latent_dim() const {
  return static_cast<int>(y_.size()) + 1;
}

int HierarchicalToy::num_datapoints() const {
  return static_cast<int>(y_.size());
}

NodeId HierarchicalToy::prior_graph(Graph& g, NodeId z) const {
  NodeId beta = g.component(z, 0);
  return g.add(g.constant(-0.5 * kLog2Pi), g.scale(-0.5, g.square(beta)));
}

NodeId HierarchicalToy::datapoint_term(Graph& g, NodeId z, int i) const {
  NodeId beta = g.component(z, 0);
  NodeId zi = g.component(z, 1 + i);
  NodeId local = g.square(g.sub(zi, beta));
  NodeId obs = g.square(g.sub(g.constant(y_[i]), zi));
  return g.add(g.constant(-kLog2Pi),
               g.scale(-0.5, g.add(local, obs)));
}

NodeId HierarchicalToy::log_joint_graph(Graph& g, NodeId z) const {
  if (g.shape(z) != Shape::vector(latent_dim())) {
    throw ShapeError("HierarchicalToy: z has wrong shape");
  }
  NodeId acc = prior_graph(g, z);
  for (int i = 0; i < num_datapoints(); ++i) {
    acc = g.add(acc, datapoint_term(g, z, i));
  }
  return acc;
}

}  // namespace opvi

// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#include "opvi/variational.hpp"

#include <cmath>

#include "opvi/errors.hpp"

namespace opvi {
namespace {

const double kLog2Pi = std::log(8.0 * std::atan(1.0));

// Inverse of softplus: rho with softplus(rho) = s.
double softplus_inverse(double s) {
  if (!(s > 0.0)) {
    throw InvalidArgumentError("softplus_inverse: argument must be positive");
  }
  return std::log(std::expm1(s));
}

}  // namespace

// --- ParamSet -----------------------------------------------------------

ParamSet::ParamSet(std::vector<ParamSpec> spec) : spec_(std::move(spec)) {
  values_.reserve(spec_.size());
  for (const auto& s : spec_) {
    values_.emplace_back(Eigen::VectorXd::Zero(s.shape.size()));
    flat_size_ += s.shape.size();
  }
}

int ParamSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < spec_.size(); ++i) {
    if (spec_[i].name == name) return static_cast<int>(i);
  }
  throw InvalidArgumentError("ParamSet: no slot named " + std::string(name));
}

Eigen::VectorXd& ParamSet::slot(std::string_view name) {
  return values_[find(name)];
}

const Eigen::VectorXd& ParamSet::slot(std::string_view name) const {
  return values_[find(name)];
}

Eigen::VectorXd ParamSet::flat() const {
  Eigen::VectorXd out(flat_size_);
  int at = 0;
  for (const auto& v : values_) {
    out.segment(at, v.size()) = v;
    at += static_cast<int>(v.size());
  }
  return out;
}

void ParamSet::set_flat(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != flat_size_) {
    throw InvalidArgumentError("ParamSet::set_flat: length mismatch");
  }
  int at = 0;
  for (auto& slot : values_) {
    slot = v.segment(at, slot.size());
    at += static_cast<int>(slot.size());
  }
}

void ParamSet::bind(Evaluator& ev) const {
  for (std::size_t i = 0; i < spec_.size(); ++i) {
    NodeId var = ev.graph().find_variable(spec_[i].name);
    if (!var.valid()) continue;
    if (spec_[i].shape.is_scalar()) {
      ev.bind(var, values_[i][0]);
    } else {
      ev.bind(var, values_[i]);
    }
  }
}

// --- VariationalFamily --------------------------------------------------

NodeId VariationalFamily::log_density_graph(Graph&, NodeId) const {
  throw DensityUnavailableError(
      "variational family does not expose a log density");
}

std::vector<NodeId> VariationalFamily::score_graphs(Graph& g) const {
  NodeId lq = log_density_graph(g);
  std::vector<NodeId> params;
  for (const auto& s : param_spec()) {
    NodeId var = g.find_variable(s.name);
    if (!var.valid()) {
      throw GraphError("log density graph omitted parameter " + s.name);
    }
    params.push_back(var);
  }
  return grad_multi(g, lq, params, {});
}

Eigen::VectorXd VariationalFamily::sample(const ParamSet& params,
                                          RngStream& rng) const {
  Sampler s(*this);
  return s.draw(params, rng);
}

Sampler::Sampler(const VariationalFamily& family)
    : z_(), ev_(g_), noise_dim_(family.noise_dim()) {
  z_ = family.reparam_graph(g_);
}

Eigen::VectorXd Sampler::draw(const ParamSet& params, RngStream& rng) {
  return draw_with_eps(params, rng.normal_vector(noise_dim_));
}

Eigen::VectorXd Sampler::draw_with_eps(
    const ParamSet& params, const Eigen::Ref<const Eigen::VectorXd>& eps) {
  params.bind(ev_);
  ev_.bind("eps", eps);
  return ev_.vector(z_);
}

// --- MeanFieldGaussian --------------------------------------------------

MeanFieldGaussian::MeanFieldGaussian(int dim, double init_mean,
                                     double init_stddev)
    : dim_(dim), init_mean_(init_mean), init_stddev_(init_stddev) {
  if (dim < 1) throw InvalidArgumentError("MeanFieldGaussian: dim must be >= 1");
  if (!(init_stddev > 0.0)) {
    throw InvalidArgumentError("MeanFieldGaussian: init stddev must be > 0");
  }
}

std::vector<ParamSpec> MeanFieldGaussian::param_spec() const {
  return {{"mu", Shape::vector(dim_)}, {"rho", Shape::vector(dim_)}};
}

ParamSet MeanFieldGaussian::init_params(RngStream&) const {
  ParamSet p(param_spec());
  p.slot("mu").setConstant(init_mean_);
  p.slot("rho").setConstant(softplus_inverse(init_stddev_));
  return p;
}

NodeId MeanFieldGaussian::reparam_graph(Graph& g) const {
  NodeId mu = g.param("mu", Shape::vector(dim_));
  NodeId rho = g.param("rho", Shape::vector(dim_));
  NodeId eps = g.input("eps", Shape::vector(dim_));
  return g.add(mu, g.mul(g.softplus(rho), eps));
}

NodeId MeanFieldGaussian::log_density_graph(Graph& g, NodeId z) const {
  if (g.shape(z) != Shape::vector(dim_)) {
    throw ShapeError("MeanFieldGaussian: z has wrong shape");
  }
  NodeId mu = g.param("mu", Shape::vector(dim_));
  NodeId rho = g.param("rho", Shape::vector(dim_));
  NodeId sigma = g.softplus(rho);
  NodeId scaled = g.mul(g.sub(z, mu), g.reciprocal(sigma));
  NodeId quad = g.dot(scaled, scaled);
  NodeId logdet = g.sum(g.log(sigma));
  return g.sub(g.constant(-0.5 * dim_ * kLog2Pi),
               g.add(logdet, g.scale(0.5, quad)));
}

Eigen::VectorXd MeanFieldGaussian::stddev(const ParamSet& params) {
  const Eigen::VectorXd& rho = params.slot("rho");
  Eigen::VectorXd s(rho.size());
  for (Eigen::Index i = 0; i < rho.size(); ++i) {
    s[i] = std::max(rho[i], 0.0) + std::log1p(std::exp(-std::abs(rho[i])));
  }
  return s;
}

Eigen::VectorXd MeanFieldGaussian::mean(const ParamSet& params) {
  return params.slot("mu");
}

// --- VariationalProgram -------------------------------------------------

VariationalProgram::VariationalProgram(int dim, int hidden)
    : dim_(dim), hidden_(hidden > 0 ? hidden : 2 * dim) {
  if (dim < 1) throw InvalidArgumentError("VariationalProgram: dim >= 1");
}

std::vector<ParamSpec> VariationalProgram::param_spec() const {
  std::vector<ParamSpec> spec;
  auto layer = [&spec](const std::string& tag, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
      spec.push_back({"w" + tag + "_" + std::to_string(r),
                      Shape::vector(cols)});
    }
    spec.push_back({"b" + tag, Shape::vector(rows)});
  };
  layer("1", hidden_, dim_);
  layer("2", hidden_, hidden_);
  layer("3", dim_, hidden_);
  return spec;
}

ParamSet VariationalProgram::init_params(RngStream& rng) const {
  // Identity-preserving start: the first layer splits eps into positive and
  // negative parts, the middle layer passes them through, and the output
  // layer recombines them, so the initial pushforward is the noise itself
  // plus a small perturbation. A random squashing start instead collapses
  // most of the noise and the first iterations have nothing to work with.
  ParamSet p(param_spec());
  const int pairs = std::min(dim_, hidden_ / 2);
  auto noisy = [&rng](int cols, double scale) {
    Eigen::VectorXd w(cols);
    for (int c = 0; c < cols; ++c) {
      w[c] = scale * (2.0 * rng.uniform() - 1.0);
    }
    return w;
  };
  const double s1 = 0.05 * std::sqrt(6.0 / (hidden_ + dim_));
  for (int r = 0; r < hidden_; ++r) {
    Eigen::VectorXd w = noisy(dim_, s1);
    if (r < 2 * pairs) w[r % pairs] += r < pairs ? 1.0 : -1.0;
    p.slot("w1_" + std::to_string(r)) = w;
  }
  const double s2 = 0.05 * std::sqrt(6.0 / (hidden_ + hidden_));
  for (int r = 0; r < hidden_; ++r) {
    Eigen::VectorXd w = noisy(hidden_, s2);
    w[r] += 1.0;
    p.slot("w2_" + std::to_string(r)) = w;
  }
  const double s3 = 0.05 * std::sqrt(6.0 / (dim_ + hidden_));
  for (int r = 0; r < dim_; ++r) {
    Eigen::VectorXd w = noisy(hidden_, s3);
    if (r < pairs) {
      w[r] += 1.0;
      w[pairs + r] -= 1.0;
    }
    p.slot("w3_" + std::to_string(r)) = w;
  }
  return p;
}

NodeId VariationalProgram::reparam_graph(Graph& g) const {
  auto layer_rows = [&g](const std::string& tag, int rows, int cols) {
    std::vector<NodeId> ids;
    ids.reserve(rows);
    for (int r = 0; r < rows; ++r) {
      ids.push_back(
          g.param("w" + tag + "_" + std::to_string(r), Shape::vector(cols)));
    }
    return ids;
  };
  NodeId eps = g.input("eps", Shape::vector(dim_));
  NodeId h1 = g.relu(g.affine(eps, layer_rows("1", hidden_, dim_),
                              g.param("b1", Shape::vector(hidden_))));
  NodeId h2 = g.relu(g.affine(h1, layer_rows("2", hidden_, hidden_),
                              g.param("b2", Shape::vector(hidden_))));
  return g.affine(h2, layer_rows("3", dim_, hidden_),
                  g.param("b3", Shape::vector(dim_)));
}

// --- SignSplitProgram ---------------------------------------------------

SignSplitProgram::SignSplitProgram(double init_center)
    : init_center_(init_center) {
  if (!(init_center > 0.0)) {
    throw InvalidArgumentError("SignSplitProgram: init_center must be > 0");
  }
}

std::vector<ParamSpec> SignSplitProgram::param_spec() const {
  return {{"a1", Shape::scalar()},
          {"b1", Shape::scalar()},
          {"a2", Shape::scalar()},
          {"b2", Shape::scalar()}};
}

ParamSet SignSplitProgram::init_params(RngStream&) const {
  ParamSet p(param_spec());
  const double b = std::log(std::expm1(init_center_));
  p.slot("a1")[0] = 1.0;
  p.slot("b1")[0] = b;
  p.slot("a2")[0] = 1.0;
  p.slot("b2")[0] = b;
  return p;
}

NodeId SignSplitProgram::reparam_graph(Graph& g) const {
  NodeId a1 = g.param("a1", Shape::scalar());
  NodeId b1 = g.param("b1", Shape::scalar());
  NodeId a2 = g.param("a2", Shape::scalar());
  NodeId b2 = g.param("b2", Shape::scalar());
  NodeId eps = g.input("eps", Shape::vector(3));
  NodeId e1 = g.component(eps, 0);
  NodeId e2 = g.component(eps, 1);
  NodeId e3 = g.component(eps, 2);
  NodeId pos = g.softplus(g.add(g.mul(a1, e1), b1));
  NodeId neg = g.neg(g.softplus(g.add(g.mul(a2, e2), b2)));
  NodeId zs = g.select_by_sign(e3, pos, neg);
  return g.pack({zs});
}

}  // namespace opvi

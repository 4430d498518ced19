// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for unit and acceptance tests: a central finite-difference
// oracle for gradients and a random-expression generator used to stress the
// differentiation transforms.

#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "opvi/graph.hpp"
#include "opvi/rng.hpp"
#include "opvi/testfn.hpp"
#include "opvi/variational.hpp"

namespace opvi::testing {

/// f(z) = s * z with one scalar parameter "f_scale"; the linear test
/// function whose operator values have hand-computable expectations.
class ScaleFn : public TestFunction {
 public:
  explicit ScaleFn(int dim, double init = 1.0) : dim_(dim), init_(init) {}
  int dim() const override { return dim_; }
  std::vector<ParamSpec> param_spec() const override {
    return {{"f_scale", Shape::scalar()}};
  }
  ParamSet init_params(RngStream&) const override {
    ParamSet p(param_spec());
    p.slot("f_scale")[0] = init_;
    return p;
  }
  NodeId apply(Graph& g, NodeId z) const override {
    return g.mul(g.param("f_scale", Shape::scalar()), z);
  }

 private:
  int dim_;
  double init_;
};

/// Gauss-Hermite nodes and weights from the Jacobi matrix eigendecomposition
/// (weight function e^{-x^2}).
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

inline GaussHermite gauss_hermite(int n) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = std::sqrt(k / 2.0);
    jacobi(k - 1, k) = b;
    jacobi(k, k - 1) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  GaussHermite gh;
  gh.nodes = es.eigenvalues();
  gh.weights.resize(n);
  const double sqrt_pi = std::sqrt(4.0 * std::atan(1.0));
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    gh.weights[i] = sqrt_pi * v0 * v0;
  }
  return gh;
}

/// E_{z ~ N(mu, sd^2)}[h(z)] by n-point quadrature.
inline double expect_normal(double mu, double sd, int n,
                            const std::function<double(double)>& h) {
  const GaussHermite gh = gauss_hermite(n);
  const double inv_sqrt_pi = 1.0 / std::sqrt(4.0 * std::atan(1.0));
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += gh.weights[i] * h(mu + std::sqrt(2.0) * sd * gh.nodes[i]);
  }
  return acc * inv_sqrt_pi;
}

/// Tensor-product quadrature for a diagonal Gaussian in d dimensions.
inline double expect_normal_nd(
    const Eigen::VectorXd& mu, const Eigen::VectorXd& sd, int n,
    const std::function<double(const Eigen::VectorXd&)>& h) {
  const int d = static_cast<int>(mu.size());
  const GaussHermite gh = gauss_hermite(n);
  const double inv_sqrt_pi = 1.0 / std::sqrt(4.0 * std::atan(1.0));
  std::vector<int> idx(d, 0);
  Eigen::VectorXd point(d);
  double acc = 0.0;
  while (true) {
    double w = 1.0;
    for (int k = 0; k < d; ++k) {
      point[k] = mu[k] + std::sqrt(2.0) * sd[k] * gh.nodes[idx[k]];
      w *= gh.weights[idx[k]] * inv_sqrt_pi;
    }
    acc += w * h(point);
    int k = 0;
    for (; k < d; ++k) {
      if (++idx[k] < n) break;
      idx[k] = 0;
    }
    if (k == d) break;
  }
  return acc;
}

/// Kolmogorov-Smirnov statistic of a sample against a reference CDF.
inline double ks_statistic(std::vector<double> xs,
                           const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double stat = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = cdf(xs[i]);
    stat = std::max(stat, std::abs(F - static_cast<double>(i) / n));
    stat = std::max(stat, std::abs(F - static_cast<double>(i + 1) / n));
  }
  return stat;
}

inline double normal_cdf(double x, double mu = 0.0, double sd = 1.0) {
  return 0.5 * std::erfc(-(x - mu) / (sd * std::sqrt(2.0)));
}

struct FdReport {
  bool ok = true;
  int checks = 0;
  double max_abs_err = 0.0;
  std::string worst;  // description of the worst coordinate
};

inline bool fd_close(double a, double b, double atol, double rtol) {
  return std::abs(a - b) <= atol + rtol * std::max(std::abs(a), std::abs(b));
}

/// Central finite differences of a scalar root with respect to each listed
/// variable, compared against the gradient graphs. Appends to g.
inline FdReport fd_check_grad(Graph& g, NodeId root,
                              const std::vector<std::string>& vars,
                              const Bindings& point, double step = 1e-5,
                              double atol = 1e-8, double rtol = 1e-6) {
  FdReport rep;
  std::vector<NodeId> ids;
  for (const auto& v : vars) ids.push_back(g.find_variable(v));
  std::vector<NodeId> grads = grad_multi(g, root, ids, {});

  Evaluator ev(g);
  ev.bind(point);
  for (std::size_t vi = 0; vi < vars.size(); ++vi) {
    const Shape s = g.shape(ids[vi]);
    Eigen::VectorXd analytic(s.size());
    if (s.is_scalar()) {
      analytic[0] = ev.scalar(grads[vi]);
    } else {
      analytic = ev.vector(grads[vi]);
    }
    const Value* pv = point.find(vars[vi]);
    Eigen::VectorXd base =
        s.is_scalar() ? Eigen::VectorXd::Constant(1, pv->as_scalar())
                      : pv->as_vector();
    for (int j = 0; j < s.size(); ++j) {
      Eigen::VectorXd hi = base, lo = base;
      hi[j] += step;
      lo[j] -= step;
      Evaluator evp(g);
      evp.bind(point);
      Evaluator evm(g);
      evm.bind(point);
      if (s.is_scalar()) {
        evp.bind(ids[vi], hi[0]);
        evm.bind(ids[vi], lo[0]);
      } else {
        evp.bind(ids[vi], hi);
        evm.bind(ids[vi], lo);
      }
      const double fd = (evp.scalar(root) - evm.scalar(root)) / (2.0 * step);
      const double err = std::abs(fd - analytic[j]);
      ++rep.checks;
      if (err > rep.max_abs_err) {
        rep.max_abs_err = err;
        rep.worst = vars[vi] + "[" + std::to_string(j) + "]";
      }
      if (!fd_close(fd, analytic[j], atol, rtol)) {
        rep.ok = false;
        rep.worst = vars[vi] + "[" + std::to_string(j) + "] analytic=" +
                    std::to_string(analytic[j]) + " fd=" + std::to_string(fd);
      }
    }
  }
  return rep;
}

/// Random smooth-ish expression over a vector z, a vector w, and a scalar s.
/// Kinked primitives (relu, select, norm-clip) are included; `kink_margin`
/// lets callers test whether a candidate point is safely away from every
/// kink before running finite differences.
class RandomExpr {
 public:
  RandomExpr(RngStream& rng, int dim, int steps) : dim_(dim) {
    z_ = g_.input("z", Shape::vector(dim));
    w_ = g_.input("w", Shape::vector(dim));
    s_ = g_.input("s", Shape::scalar());
    vectors_ = {z_, w_};
    scalars_ = {s_, g_.constant(0.7), g_.dot(z_, w_)};
    for (int i = 0; i < steps; ++i) grow(rng);
    NodeId v = vectors_.back();
    NodeId sc = scalars_.back();
    root_ = g_.add(g_.sum(v), sc);
  }

  Graph& graph() { return g_; }
  NodeId root() const { return root_; }
  int dim() const { return dim_; }

  /// True if every kink condition at this point is at least `margin` away
  /// from zero, so central differences with a smaller step are valid.
  bool safe_at(const Bindings& point, double margin) {
    Evaluator ev(g_);
    ev.bind(point);
    for (NodeId c : kink_conds_) {
      auto vals = ev.slot(c);
      for (double v : vals) {
        if (std::abs(v) < margin) return false;
      }
    }
    return true;
  }

 private:
  void grow(RngStream& rng) {
    const int op = static_cast<int>(rng.uniform_int(0, 12));
    NodeId a = pick_vec(rng);
    NodeId b = pick_vec(rng);
    NodeId sc = pick_scalar(rng);
    switch (op) {
      case 0:
        vectors_.push_back(g_.add(a, b));
        break;
      case 1:
        vectors_.push_back(g_.mul(a, g_.tanh(b)));
        break;
      case 2:
        vectors_.push_back(g_.tanh(a));
        break;
      case 3:
        vectors_.push_back(g_.mul(sc, a));
        break;
      case 4:
        scalars_.push_back(g_.dot(a, g_.sigmoid(b)));
        break;
      case 5:
        vectors_.push_back(g_.softplus(a));
        break;
      case 6:
        scalars_.push_back(g_.log(g_.add(g_.softplus(sc), g_.constant(0.2))));
        break;
      case 7:
        scalars_.push_back(
            g_.reciprocal(g_.add(g_.square(sc), g_.constant(0.5))));
        break;
      case 8: {
        std::vector<NodeId> rows;
        for (int i = 0; i < dim_; ++i) {
          rows.push_back(g_.constant(rng.normal_vector(dim_) * 0.5));
        }
        vectors_.push_back(
            g_.affine(a, rows, g_.constant(rng.normal_vector(dim_) * 0.3)));
        break;
      }
      case 9: {
        NodeId clipped = g_.norm_clip(a, 1.5);
        vectors_.push_back(clipped);
        kink_conds_.push_back(g_.sub(g_.constant(1.5 * 1.5), g_.dot(a, a)));
        break;
      }
      case 10: {
        vectors_.push_back(g_.relu(a));
        kink_conds_.push_back(a);
        break;
      }
      case 11: {
        vectors_.push_back(g_.select_by_sign(sc, a, b));
        kink_conds_.push_back(sc);
        break;
      }
      default:
        scalars_.push_back(g_.exp(g_.scale(0.25, g_.tanh(sc))));
        break;
    }
  }

  NodeId pick_vec(RngStream& rng) {
    return vectors_[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(vectors_.size()) - 1))];
  }
  NodeId pick_scalar(RngStream& rng) {
    return scalars_[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(scalars_.size()) - 1))];
  }

  Graph g_;
  int dim_;
  NodeId z_, w_, s_, root_;
  std::vector<NodeId> vectors_;
  std::vector<NodeId> scalars_;
  std::vector<NodeId> kink_conds_;
};

/// One randomized gradient-vs-finite-difference check; resamples the
/// evaluation point until it is clear of every kink. Returns the report.
inline FdReport random_fd_check(std::uint64_t seed, std::uint64_t index) {
  RngStream rng = RngStream::derive(seed, {index});
  const int dim = 1 + static_cast<int>(rng.uniform_int(0, 3));
  const int steps = 4 + static_cast<int>(rng.uniform_int(0, 8));
  RandomExpr expr(rng, dim, steps);
  for (int attempt = 0; attempt < 64; ++attempt) {
    Bindings point;
    point.set("z", Eigen::VectorXd(rng.normal_vector(dim) * 1.2));
    point.set("w", Eigen::VectorXd(rng.normal_vector(dim) * 1.2));
    point.set("s", rng.normal());
    if (!expr.safe_at(point, 1e-3)) continue;
    return fd_check_grad(expr.graph(), expr.root(), {"z", "w", "s"}, point);
  }
  FdReport rep;
  rep.ok = false;
  rep.worst = "no kink-free evaluation point found";
  return rep;
}

}  // namespace opvi::testing

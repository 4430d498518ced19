// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <vector>

#include "opvi/errors.hpp"
#include "opvi/graph.hpp"
#include "opvi/models.hpp"
#include "opvi/rng.hpp"
#include "testutil.hpp"

using namespace opvi;
namespace tt = opvi::testing;

namespace {

double eval_log_joint(const Model& m, const Eigen::VectorXd& z) {
  Graph g;
  NodeId root = m.log_joint_graph(g);
  Evaluator ev(g);
  ev.bind("z", z);
  return ev.scalar(root);
}

Eigen::VectorXd eval_score(const Model& m, const Eigen::VectorXd& z) {
  Graph g;
  NodeId root = m.log_joint_graph(g);
  NodeId gz = grad(g, root, g.find_variable("z"));
  Evaluator ev(g);
  ev.bind("z", z);
  return ev.vector(gz);
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("standard normal log density") {
  GaussianTarget m(1);
  Eigen::VectorXd z(1);
  z << 0.0;
  CHECK(eval_log_joint(m, z) ==
        doctest::Approx(-0.9189385332046727).epsilon(1e-13));
  z << 1.0;
  CHECK(eval_log_joint(m, z) ==
        doctest::Approx(-1.4189385332046727).epsilon(1e-13));

  GaussianTarget m2(2);
  Eigen::VectorXd z2 = Eigen::VectorXd::Zero(2);
  CHECK(eval_log_joint(m2, z2) ==
        doctest::Approx(-1.8378770664093453).epsilon(1e-13));
}

TEST_CASE("shifted and scaled gaussian") {
  GaussianTarget m(1, 1.5, 2.0);
  Eigen::VectorXd z(1);
  // At mean + sd the density is -log(sd) - 0.5*log(2*pi) - 0.5.
  z << 3.5;
  const double expect = -std::log(2.0) - 0.9189385332046727 - 0.5;
  CHECK(eval_log_joint(m, z) == doctest::Approx(expect).epsilon(1e-13));
  // Score is -(z - mu) / sd^2.
  CHECK(eval_score(m, z)[0] == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("gaussian with per-coordinate parameters and log offset") {
  Eigen::VectorXd mean(2), sd(2);
  mean << -1.0, 2.0;
  sd << 0.5, 3.0;
  GaussianTarget m(mean, sd, 7.25);
  Eigen::VectorXd z(2);
  z << 0.0, 1.0;
  double expect = 7.25;
  for (int i = 0; i < 2; ++i) {
    const double r = (z[i] - mean[i]) / sd[i];
    expect += -std::log(sd[i]) - 0.5 * std::log(2.0 * M_PI) - 0.5 * r * r;
  }
  CHECK(eval_log_joint(m, z) == doctest::Approx(expect).epsilon(1e-12));

  Eigen::VectorXd score = eval_score(m, z);
  CHECK(score[0] == doctest::Approx(-(z[0] - mean[0]) / (sd[0] * sd[0])));
  CHECK(score[1] == doctest::Approx(-(z[1] - mean[1]) / (sd[1] * sd[1])));
}

TEST_CASE("gaussian gradient matches finite differences") {
  Eigen::VectorXd mean(3), sd(3);
  mean << 0.3, -0.7, 1.1;
  sd << 1.2, 0.4, 2.5;
  GaussianTarget m(mean, sd);
  Graph g;
  NodeId root = m.log_joint_graph(g);
  Bindings point;
  Eigen::VectorXd z(3);
  z << 0.9, -0.2, 0.4;
  point.set("z", z);
  auto rep = tt::fd_check_grad(g, root, {"z"}, point);
  CHECK_MESSAGE(rep.ok, rep.worst);
}

TEST_CASE("mixture closed form and graph agree") {
  MixtureTarget m;
  CHECK(m.log_density(0.0) ==
        doctest::Approx(-4.5 - 0.5 * std::log(2.0 * M_PI)).epsilon(1e-13));
  // At a mode, each component is a Gaussian at 0 or 6 away.
  const double at_mode =
      std::log(0.5 * (std::exp(-0.0) + std::exp(-18.0))) -
      0.5 * std::log(2.0 * M_PI);
  CHECK(m.log_density(3.0) == doctest::Approx(at_mode).epsilon(1e-13));

  for (double z : {-6.0, -3.0, -0.5, 0.0, 0.25, 1.0, 2.9, 3.0, 4.2, 7.0}) {
    Eigen::VectorXd zv(1);
    zv << z;
    CHECK(eval_log_joint(m, zv) ==
          doctest::Approx(m.log_density(z)).epsilon(1e-12));
  }
}

TEST_CASE("mixture is symmetric and does not underflow in the tails") {
  MixtureTarget m;
  for (double z : {0.3, 1.7, 5.0, 20.0, 40.0}) {
    CHECK(m.log_density(z) == doctest::Approx(m.log_density(-z)));
  }
  Eigen::VectorXd far(1);
  far << 40.0;
  const double v = eval_log_joint(m, far);
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(m.log_density(40.0)).epsilon(1e-12));
}

TEST_CASE("mixture score near a mode is tiny but nonzero") {
  MixtureTarget m;
  Eigen::VectorXd z(1);
  z << 3.0;
  // d/dz log p = (-w0 * 6) / (w0 + w1) with w0 = phi(6), w1 = phi(0).
  const double phi6 = std::exp(-18.0) / std::sqrt(2.0 * M_PI);
  const double phi0 = 1.0 / std::sqrt(2.0 * M_PI);
  const double expect = -6.0 * phi6 / (phi6 + phi0);
  CHECK(eval_score(m, z)[0] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("mixture gradient matches finite differences") {
  MixtureTarget m;
  Graph g;
  NodeId root = m.log_joint_graph(g);
  for (double z : {-4.0, -1.2, 0.7, 2.2, 3.8}) {
    Bindings point;
    Eigen::VectorXd zv(1);
    zv << z;
    point.set("z", zv);
    auto rep = tt::fd_check_grad(g, root, {"z"}, point);
    CHECK_MESSAGE(rep.ok, rep.worst);
  }
}

TEST_CASE("logistic factor analysis log joint") {
  Eigen::MatrixXd W(2, 3);
  W << 0.5, -1.0, 0.25, 1.5, 0.75, -0.5;
  Eigen::VectorXd b(3), x(3);
  b << 0.1, -0.2, 0.3;
  x << 1.0, 0.0, 1.0;
  LogisticFactorAnalysis m(W, b, x);
  CHECK(m.latent_dim() == 2);
  CHECK(m.num_pixels() == 3);

  Eigen::VectorXd z(2);
  z << 0.4, -1.3;
  Eigen::VectorXd logits = W.transpose() * z + b;
  double expect = -std::log(2.0 * M_PI) - 0.5 * z.squaredNorm();
  for (int p = 0; p < 3; ++p) {
    expect += x[p] * logits[p] -
              (std::max(logits[p], 0.0) +
               std::log1p(std::exp(-std::abs(logits[p]))));
  }
  CHECK(eval_log_joint(m, z) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("logistic factor analysis gradient matches finite differences") {
  RngStream rng = RngStream::derive(77, {1});
  Eigen::MatrixXd W(3, 8);
  for (int r = 0; r < 3; ++r) W.row(r) = rng.normal_vector(8).transpose();
  Eigen::VectorXd b = rng.normal_vector(8);
  Eigen::VectorXd x(8);
  for (int p = 0; p < 8; ++p) x[p] = rng.uniform() < 0.5 ? 0.0 : 1.0;
  LogisticFactorAnalysis m(W, b, x);

  Graph g;
  NodeId root = m.log_joint_graph(g);
  Bindings point;
  point.set("z", Eigen::VectorXd(rng.normal_vector(3)));
  auto rep = tt::fd_check_grad(g, root, {"z"}, point);
  CHECK_MESSAGE(rep.ok, rep.worst);
}

TEST_CASE("masked likelihood drops unobserved pixels") {
  Eigen::MatrixXd W(2, 4);
  W << 0.5, -1.0, 0.25, 0.8, 1.5, 0.75, -0.5, -0.1;
  Eigen::VectorXd b(4), x(4), mask(4);
  b << 0.1, -0.2, 0.3, 0.0;
  x << 1.0, 0.0, 1.0, 1.0;
  mask << 1.0, 0.0, 0.0, 1.0;
  LogisticFactorAnalysis full(W, b, x);
  LogisticFactorAnalysis masked(W, b, x, mask);

  Eigen::VectorXd z(2);
  z << -0.6, 0.9;
  Eigen::VectorXd logits = W.transpose() * z + b;
  double expect = -std::log(2.0 * M_PI) - 0.5 * z.squaredNorm();
  for (int p = 0; p < 4; ++p) {
    if (mask[p] == 0.0) continue;
    expect += x[p] * logits[p] -
              (std::max(logits[p], 0.0) +
               std::log1p(std::exp(-std::abs(logits[p]))));
  }
  CHECK(eval_log_joint(masked, z) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(eval_log_joint(masked, z) != doctest::Approx(eval_log_joint(full, z)));
}

TEST_CASE("logistic factor analysis validates its data") {
  Eigen::MatrixXd W(2, 3);
  W.setZero();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd x(3);
  x << 1.0, 0.5, 0.0;
  CHECK_THROWS_AS(LogisticFactorAnalysis(W, b, x), InvalidArgumentError);
  x << 1.0, 1.0, 0.0;
  Eigen::VectorXd bad_b = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(LogisticFactorAnalysis(W, bad_b, x), InvalidArgumentError);
  Eigen::VectorXd bad_mask(3);
  bad_mask << 1.0, 2.0, 0.0;
  CHECK_THROWS_AS(LogisticFactorAnalysis(W, b, x, bad_mask),
                  InvalidArgumentError);
}

TEST_CASE("hierarchical toy log joint") {
  Eigen::VectorXd y(3);
  y << 0.5, -1.0, 2.0;
  HierarchicalToy m(y);
  CHECK(m.latent_dim() == 4);
  CHECK(m.num_datapoints() == 3);

  Eigen::VectorXd z(4);
  z << 0.2, 0.6, -0.8, 1.4;  // (beta, z_1, z_2, z_3)
  const double c = -0.5 * std::log(2.0 * M_PI);
  double expect = c - 0.5 * z[0] * z[0];
  for (int i = 0; i < 3; ++i) {
    const double zi = z[i + 1];
    expect += c - 0.5 * (zi - z[0]) * (zi - z[0]);
    expect += c - 0.5 * (y[i] - zi) * (y[i] - zi);
  }
  CHECK(eval_log_joint(m, z) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("subsampled joint averages back to the full joint") {
  Eigen::VectorXd y(4);
  y << 0.5, -1.0, 2.0, 0.1;
  HierarchicalToy m(y);
  Eigen::VectorXd z(5);
  z << 0.3, -0.4, 1.1, 0.8, -0.2;

  Graph g;
  NodeId full = m.log_joint_graph(g);
  NodeId zvar = g.find_variable("z");
  NodeId full_grad = grad(g, full, zvar);

  std::vector<std::array<int, 2>> batches;
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) batches.push_back({i, j});
  }
  REQUIRE(batches.size() == 6);

  Evaluator ev(g);
  ev.bind("z", z);
  double sum = 0.0;
  Eigen::VectorXd grad_sum = Eigen::VectorXd::Zero(5);
  for (const auto& batch : batches) {
    Graph gb;
    std::vector<int> idx(batch.begin(), batch.end());
    NodeId sub = m.subsampled_log_joint(gb, idx);
    NodeId sub_grad = grad(gb, sub, gb.find_variable("z"));
    Evaluator evb(gb);
    evb.bind("z", z);
    sum += evb.scalar(sub);
    grad_sum += evb.vector(sub_grad);
  }
  CHECK(sum / 6.0 == doctest::Approx(ev.scalar(full)).epsilon(1e-12));
  Eigen::VectorXd mean_grad = grad_sum / 6.0;
  Eigen::VectorXd fg = ev.vector(full_grad);
  for (int k = 0; k < 5; ++k) {
    CHECK(mean_grad[k] == doctest::Approx(fg[k]).epsilon(1e-10));
  }
}

TEST_CASE("subsampling validates batches and model support") {
  Eigen::VectorXd y(3);
  y << 0.0, 1.0, 2.0;
  HierarchicalToy m(y);
  Graph g;
  std::vector<int> empty;
  CHECK_THROWS_AS(m.subsampled_log_joint(g, empty), InvalidArgumentError);
  std::vector<int> dup = {1, 1};
  CHECK_THROWS_AS(m.subsampled_log_joint(g, dup), InvalidArgumentError);
  std::vector<int> oob = {0, 3};
  CHECK_THROWS_AS(m.subsampled_log_joint(g, oob), InvalidArgumentError);

  GaussianTarget plain(2);
  std::vector<int> batch = {0};
  Graph g2;
  CHECK_THROWS_AS(plain.subsampled_log_joint(g2, batch), IncompatibleError);
}

}  // TEST_SUITE

// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "opvi/errors.hpp"
#include "opvi/models.hpp"
#include "opvi/operators.hpp"
#include "opvi/optimizer.hpp"
#include "opvi/rng.hpp"
#include "opvi/testfn.hpp"
#include "opvi/variational.hpp"
#include "testutil.hpp"

using namespace opvi;
namespace tt = opvi::testing;

namespace {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double m = 0.0;
  for (double x : xs) m += x;
  m /= n;
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= (n - 1.0);
  return {m, std::sqrt(v / n)};
}

// q = N(mu, softplus(rho)) with mu = 1, sigma = 1.
ParamSet unit_lambda_at_one(const MeanFieldGaussian& q) {
  RngStream r = RngStream::derive(0, {0});
  ParamSet p = q.init_params(r);
  p.slot("mu")[0] = 1.0;
  return p;
}

}  // namespace

TEST_SUITE("optimizer") {

TEST_CASE("adam first step has learning-rate magnitude") {
  Adam opt(2, 0.1);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd g(2);
  g << 1000.0, -0.004;
  opt.step(x, g);
  CHECK(x[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(x[1] == doctest::Approx(0.1).epsilon(1e-4));
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("adam matches a reference implementation over many steps") {
  Adam opt(1, 0.05, 0.9, 0.999, 1e-8);
  Eigen::VectorXd x(1);
  x << 2.0;
  double rx = 2.0, m = 0.0, v = 0.0;
  RngStream rng = RngStream::derive(41, {0});
  for (int t = 1; t <= 50; ++t) {
    const double grad = rng.normal();
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    rx -= 0.05 * (m / (1.0 - std::pow(0.9, t))) /
          (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
    Eigen::VectorXd g(1);
    g << grad;
    opt.step(x, g);
    CHECK(x[0] == doctest::Approx(rx).epsilon(1e-12));
  }
}

TEST_CASE("adam minimizes a quadratic") {
  Adam opt(1, 0.1);
  Eigen::VectorXd x(1);
  x << -4.0;
  for (int t = 0; t < 1000; ++t) {
    Eigen::VectorXd g(1);
    g << 2.0 * (x[0] - 3.0);
    opt.step(x, g);
  }
  CHECK(x[0] == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("adam restore resumes identically") {
  auto grad_at = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(2.0 * x);
  };
  Adam a(2, 0.07);
  Eigen::VectorXd xa(2);
  xa << 1.0, -2.0;
  for (int t = 0; t < 3; ++t) a.step(xa, grad_at(xa));

  Adam b(2, 0.07);
  b.restore(a.first_moment(), a.second_moment(), a.steps_taken());
  Eigen::VectorXd xb = xa;
  for (int t = 0; t < 4; ++t) {
    a.step(xa, grad_at(xa));
    b.step(xb, grad_at(xb));
  }
  CHECK(xa == xb);
}

TEST_CASE("adam validates arguments") {
  CHECK_THROWS_AS(Adam(2, 0.0), InvalidArgumentError);
  Adam opt(2, 0.1);
  Eigen::VectorXd x(3), g(3);
  x.setZero();
  g.setZero();
  CHECK_THROWS_AS(opt.step(x, g), InvalidArgumentError);
}

// Toy problem with closed-form gradients: p = N(0,1), q = N(mu, sigma),
// f(z) = theta * z, so (O f)(z) = theta (1 - z^2) and with mu = 1,
// sigma = 1, theta = 1:
//   E[op] = -1,  J = 1,  dJ/dmu = 4,  dJ/drho = 4 sigmoid(rho),
//   dJ/dtheta = 2.
TEST_CASE("four-set gradient estimates are unbiased on the toy problem") {
  GaussianTarget model(1);
  MeanFieldGaussian q(1);
  tt::ScaleFn f(1);
  OperatorObjective obj = OperatorObjective::langevin_stein();
  ParamSet lambda = unit_lambda_at_one(q);
  RngStream tr = RngStream::derive(0, {1});
  ParamSet theta = f.init_params(tr);
  const double rho = lambda.slot("rho")[0];
  const double sig_rho = 1.0 / (1.0 + std::exp(-rho));

  for (EstimatorKind kind : {EstimatorKind::kReparam, EstimatorKind::kScore}) {
    MinimaxProblem prob(model, q, obj, &f, kind);
    const int reps = 3000, M = 10;
    std::vector<double> g_mu, g_rho, g_theta, obj_est;
    for (int r = 0; r < reps; ++r) {
      RngStream rng = RngStream::derive(
          kind == EstimatorKind::kReparam ? 50 : 51,
          {static_cast<std::uint64_t>(r)});
      GradEstimate est = prob.estimate(lambda, theta, M, rng);
      g_mu.push_back(est.lambda_grad[0]);
      g_rho.push_back(est.lambda_grad[1]);
      g_theta.push_back(est.theta_grad[0]);
      obj_est.push_back(est.objective);
    }
    MeanSe mu = mean_se(g_mu);
    MeanSe rrho = mean_se(g_rho);
    MeanSe th = mean_se(g_theta);
    MeanSe ob = mean_se(obj_est);
    CHECK_MESSAGE(std::abs(mu.mean - 4.0) < 3.5 * mu.se, mu.mean);
    CHECK_MESSAGE(std::abs(rrho.mean - 4.0 * sig_rho) < 3.5 * rrho.se,
                  rrho.mean);
    CHECK_MESSAGE(std::abs(th.mean - 2.0) < 3.5 * th.se, th.mean);
    CHECK_MESSAGE(std::abs(ob.mean - 1.0) < 3.5 * ob.se, ob.mean);
  }
}

TEST_CASE("single-set estimator shows the predicted bias") {
  // Reusing one set couples the two factors: the lambda gradient picks up
  // 2 Cov(op, g) / M = 8 mu theta^2 / M, i.e. +0.8 at M = 10.
  GaussianTarget model(1);
  MeanFieldGaussian q(1);
  tt::ScaleFn f(1);
  OperatorObjective obj = OperatorObjective::langevin_stein();
  ParamSet lambda = unit_lambda_at_one(q);
  RngStream tr = RngStream::derive(0, {1});
  ParamSet theta = f.init_params(tr);

  MinimaxProblem prob(model, q, obj, &f, EstimatorKind::kReparam);
  const int reps = 4000, M = 10;
  std::vector<double> g_mu;
  for (int r = 0; r < reps; ++r) {
    RngStream rng = RngStream::derive(52, {static_cast<std::uint64_t>(r)});
    g_mu.push_back(prob.estimate_single_set(lambda, theta, M, rng)
                       .lambda_grad[0]);
  }
  MeanSe mu = mean_se(g_mu);
  CHECK_MESSAGE(std::abs(mu.mean - 4.8) < 3.5 * mu.se, mu.mean);
  CHECK(std::abs(mu.mean - 4.0) > 0.4);  // clearly separated from the truth
}

TEST_CASE("kl estimates match the closed-form divergence") {
  // KL(N(1,1) || N(0,1)) = 1/2 with gradient d/dmu = mu = 1.
  GaussianTarget model(1);
  MeanFieldGaussian q(1);
  ParamSet lambda = unit_lambda_at_one(q);
  ParamSet no_theta;
  OperatorObjective obj = OperatorObjective::kl();

  MinimaxProblem prob(model, q, obj, nullptr, EstimatorKind::kReparam);
  RngStream rng = RngStream::derive(53, {0});
  GradEstimate est = prob.estimate(lambda, no_theta, 400, rng);
  // 400 samples; the integrand has unit variance.
  CHECK(std::abs(est.objective - 0.5) < 0.2);
  CHECK(std::abs(est.lambda_grad[0] - 1.0) < 0.15);
  CHECK(est.theta_grad.size() == 0);
}

TEST_CASE("score estimator requires a density") {
  GaussianTarget model(1);
  SignSplitProgram q;
  BoundedMlp f(1);
  OperatorObjective obj = OperatorObjective::langevin_stein();
  CHECK_THROWS_AS(MinimaxProblem(model, q, obj, &f, EstimatorKind::kScore),
                  IncompatibleError);
  CHECK_NOTHROW(MinimaxProblem(model, q, obj, &f, EstimatorKind::kReparam));
}

TEST_CASE("run_minimax kl recovers a gaussian target") {
  GaussianTarget model(1, 0.4, 1.0);
  MeanFieldGaussian q(1, -1.5, 0.4);  // deliberately poor start
  TrainConfig cfg;
  cfg.iterations = 500;
  cfg.samples_per_set = 20;
  cfg.lr_lambda = 0.02;
  cfg.seed = 7;
  FitResult fit = run_minimax(model, q, OperatorObjective::kl(), nullptr, cfg);
  const double mu = fit.lambda.slot("mu")[0];
  const double sd = MeanFieldGaussian::stddev(fit.lambda)[0];
  CHECK(std::abs(mu - 0.4) < 0.12);
  CHECK(std::abs(sd - 1.0) < 0.15);
  CHECK(fit.iterations_run == 500);
  CHECK(fit.theta.spec().empty());
}

TEST_CASE("run_minimax is deterministic in the seed") {
  GaussianTarget model(1);
  MeanFieldGaussian q(1, 0.8, 0.9);
  TrainConfig cfg;
  cfg.iterations = 40;
  cfg.samples_per_set = 10;
  cfg.lr_lambda = 0.05;
  cfg.seed = 99;
  cfg.metrics_every = 1;
  FitResult a = run_minimax(model, q, OperatorObjective::kl(), nullptr, cfg);
  FitResult b = run_minimax(model, q, OperatorObjective::kl(), nullptr, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].objective == b.history[i].objective);
    CHECK(a.history[i].lambda == b.history[i].lambda);
  }
}

TEST_CASE("alternating mode moves one side per iteration") {
  GaussianTarget model(1);
  MeanFieldGaussian q(1, 1.0, 1.0);
  tt::ScaleFn f(1);
  TrainConfig cfg;
  cfg.iterations = 4;
  cfg.samples_per_set = 5;
  cfg.lr_lambda = 0.05;
  cfg.lr_theta = 0.05;
  cfg.seed = 3;
  cfg.alternating = true;
  cfg.metrics_every = 1;
  FitResult fit = run_minimax(model, q, OperatorObjective::langevin_stein(),
                              &f, cfg);
  RngStream r0 = RngStream::derive(0, {0});
  Eigen::VectorXd init = q.init_params(r0).flat();
  // Iteration 0 is a theta step, so lambda is still at its init value.
  CHECK(fit.history[0].lambda == init);
  CHECK(fit.history[1].lambda != init);
}

TEST_CASE("metrics thinning keeps first, strided, and last rows") {
  GaussianTarget model(1);
  MeanFieldGaussian q(1);
  TrainConfig cfg;
  cfg.iterations = 25;
  cfg.samples_per_set = 4;
  cfg.seed = 5;
  cfg.metrics_every = 10;
  FitResult fit = run_minimax(model, q, OperatorObjective::kl(), nullptr, cfg);
  REQUIRE(fit.history.size() == 4);
  CHECK(fit.history[0].iteration == 0);
  CHECK(fit.history[1].iteration == 10);
  CHECK(fit.history[2].iteration == 20);
  CHECK(fit.history[3].iteration == 24);
  int calls = 0;
  FitResult fit2 = run_minimax(model, q, OperatorObjective::kl(), nullptr, cfg,
                               nullptr, nullptr,
                               [&calls](const IterationStats&) { ++calls; });
  CHECK(calls == 4);
}

TEST_CASE("numerical blow-ups abort with the iteration attached") {
  GaussianTarget model(1, 0.0, 1e-200);  // quadratic term overflows
  MeanFieldGaussian q(1);
  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.samples_per_set = 2;
  cfg.seed = 1;
  bool thrown = false;
  try {
    run_minimax(model, q, OperatorObjective::kl(), nullptr, cfg);
  } catch (const NumericalAbort& e) {
    thrown = true;
    CHECK(e.iteration == 0);
  }
  CHECK(thrown);
}

TEST_CASE("subsampled training runs and stays finite") {
  Eigen::VectorXd y(6);
  y << 0.5, -0.2, 1.1, 0.7, -0.9, 0.3;
  HierarchicalToy model(y);
  MeanFieldGaussian q(7);
  TrainConfig cfg;
  cfg.iterations = 30;
  cfg.samples_per_set = 5;
  cfg.lr_lambda = 0.02;
  cfg.seed = 11;
  cfg.batch_size = 2;
  cfg.metrics_every = 1;
  FitResult fit = run_minimax(model, q, OperatorObjective::kl(), nullptr, cfg);
  CHECK(fit.history.size() == 30);
  for (const auto& s : fit.history) {
    CHECK(std::isfinite(s.objective));
    CHECK(std::isfinite(s.grad_norm_lambda));
  }
  FitResult again =
      run_minimax(model, q, OperatorObjective::kl(), nullptr, cfg);
  CHECK(fit.history.back().lambda == again.history.back().lambda);
}

TEST_CASE("run_minimax with a test function fits the gaussian") {
  GaussianTarget model(1);
  MeanFieldGaussian q(1, 1.2, 0.6);
  BoundedMlp f(1);
  TrainConfig cfg;
  cfg.iterations = 400;
  cfg.samples_per_set = 20;
  cfg.lr_lambda = 0.02;
  cfg.lr_theta = 0.05;
  cfg.seed = 13;
  FitResult fit = run_minimax(model, q, OperatorObjective::langevin_stein(),
                              &f, cfg);
  const double mu = fit.lambda.slot("mu")[0];
  const double sd = MeanFieldGaussian::stddev(fit.lambda)[0];
  CHECK_MESSAGE(std::abs(mu) < 0.2, mu);
  CHECK_MESSAGE(std::abs(sd - 1.0) < 0.25, sd);
}

}  // TEST_SUITE

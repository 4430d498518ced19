// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "opvi/models.hpp"
#include "opvi/operators.hpp"
#include "opvi/rng.hpp"
#include "opvi/testfn.hpp"
#include "opvi/variational.hpp"

namespace opvi {

/// Adam with bias correction over one flat parameter vector, written as a
/// minimizer; feed the negated gradient to ascend.
class Adam {
 public:
  Adam(int dim, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);

  void step(Eigen::Ref<Eigen::VectorXd> params,
            const Eigen::Ref<const Eigen::VectorXd>& grad);

  int steps_taken() const { return t_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr);
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }

  /// Reinstates moment estimates and step count from a checkpoint.
  void restore(Eigen::VectorXd m, Eigen::VectorXd v, int steps);

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  Eigen::VectorXd m_, v_;
};

/// How the lambda gradient of the expected operator value is estimated:
/// differentiating through the sampler z = R(eps; lambda), or weighting by
/// the score of q (which requires a density).
enum class EstimatorKind {
  kReparam,
  kScore,
};

struct TrainConfig {
  int iterations = 1000;
  int samples_per_set = 100;  // Monte Carlo draws per independent set
  double lr_lambda = 2e-5;
  double lr_theta = 2e-4;
  double theta_l2 = 0.0;  // decoupled decay on theta, a soft norm ball
  // Lambda learning rate at the last iteration as a fraction of lr_lambda,
  // annealed linearly; 1 keeps the rate constant. Shrinking the late-run
  // steps shrinks the stationary jitter around the fit without slowing the
  // approach to it.
  double lr_lambda_end = 1.0;
  std::uint64_t seed = 0;
  EstimatorKind estimator = EstimatorKind::kReparam;
  bool alternating = false;  // theta on even iterations, lambda on odd
  bool single_set = false;   // biased one-set diagnostic estimator
  int batch_size = 0;        // datapoint subsample size; 0 = full data
  int metrics_every = 10;    // thinning of the recorded iteration stats
};

/// One stochastic estimate of the objective and both gradients.
struct GradEstimate {
  double objective = 0.0;
  Eigen::VectorXd lambda_grad;
  Eigen::VectorXd theta_grad;  // zero length when no test function is in play
};

struct IterationStats {
  int iteration = 0;
  double objective = 0.0;
  double grad_norm_lambda = 0.0;
  double grad_norm_theta = 0.0;
  double wall_ms = 0.0;
  Eigen::VectorXd lambda;  // flat variational parameters after the update
};

struct FitResult {
  ParamSet lambda;
  ParamSet theta;  // empty when the objective has no test function
  std::vector<IterationStats> history;
  double final_objective = 0.0;
  int iterations_run = 0;
  // Final Adam state, so checkpoints can resume the run.
  Eigen::VectorXd adam_lambda_m, adam_lambda_v;
  Eigen::VectorXd adam_theta_m, adam_theta_v;
  int adam_lambda_steps = 0;
  int adam_theta_steps = 0;
};

using MetricsCallback = std::function<void(const IterationStats&)>;

/// Graphs and evaluators for one (model, family, objective, test function)
/// combination. Squared-distance objectives estimate
///   grad = 2 * mean_A[(O f)] * mean_B[per-sample gradient]
/// from two independent sample sets per parameter block (four per call);
/// identity-distance objectives drop the leading mean factor and use the
/// plain one-set mean.
class MinimaxProblem {
 public:
  MinimaxProblem(const Model& model, const VariationalFamily& family,
                 const OperatorObjective& objective,
                 const TestFunction* f = nullptr,
                 EstimatorKind estimator = EstimatorKind::kReparam);
  ~MinimaxProblem();
  MinimaxProblem(MinimaxProblem&&) noexcept;
  MinimaxProblem& operator=(MinimaxProblem&&) noexcept;

  const VariationalFamily& family() const { return *family_; }
  bool uses_test_function() const { return f_ != nullptr; }

  /// Switches the likelihood to a datapoint subsample (empty = full data)
  /// and rebuilds the graphs.
  void set_batch(std::span<const int> batch);

  /// Unbiased estimate from independent sample sets drawn off `rng`.
  GradEstimate estimate(const ParamSet& lambda, const ParamSet& theta,
                        int samples_per_set, RngStream& rng);

  /// Diagnostic variant reusing one sample set for every factor; biased
  /// for squared distances by 2 Cov(op, grad) / M.
  GradEstimate estimate_single_set(const ParamSet& lambda,
                                   const ParamSet& theta, int samples,
                                   RngStream& rng);

 private:
  struct Built;
  struct SetStats;

  void rebuild();
  SetStats evaluate_set(const ParamSet& lambda, int samples, RngStream& rng,
                        bool want_lambda, bool want_theta);
  GradEstimate impl_estimate(const ParamSet& lambda, const ParamSet& theta,
                             int samples_per_set, RngStream& rng,
                             bool single_set);

  const Model* model_;
  const VariationalFamily* family_;
  OperatorObjective objective_;
  const TestFunction* f_;
  EstimatorKind estimator_;
  std::vector<int> batch_;
  std::unique_ptr<Built> built_;
};

/// Runs the stochastic minimax loop: Adam descent on the variational
/// parameters lambda against Adam ascent on the test-function parameters
/// theta. Throws NumericalAbort when an estimate goes non-finite.
FitResult run_minimax(const Model& model, const VariationalFamily& family,
                      const OperatorObjective& objective,
                      const TestFunction* f, const TrainConfig& config,
                      const ParamSet* lambda_init = nullptr,
                      const ParamSet* theta_init = nullptr,
                      const MetricsCallback& callback = {});

}  // namespace opvi

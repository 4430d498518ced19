// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#include "opvi/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <string>
#include <utility>

#include "opvi/errors.hpp"

namespace opvi {

// --- Adam ---------------------------------------------------------------

Adam::Adam(int dim, double lr, double beta1, double beta2, double epsilon)
    : lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon),
      m_(Eigen::VectorXd::Zero(dim)),
      v_(Eigen::VectorXd::Zero(dim)) {
  if (dim < 0) throw InvalidArgumentError("Adam: negative dimension");
  if (!(lr > 0.0)) throw InvalidArgumentError("Adam: learning rate must be > 0");
}

void Adam::step(Eigen::Ref<Eigen::VectorXd> params,
                const Eigen::Ref<const Eigen::VectorXd>& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw InvalidArgumentError("Adam: size mismatch");
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double mc = 1.0 - std::pow(beta1_, t_);
  const double vc = 1.0 - std::pow(beta2_, t_);
  params -= lr_ * (m_ / mc).cwiseQuotient(
                      ((v_ / vc).cwiseSqrt().array() + eps_).matrix());
}

void Adam::set_learning_rate(double lr) {
  if (!(lr > 0.0)) throw InvalidArgumentError("Adam: learning rate must be > 0");
  lr_ = lr;
}

void Adam::restore(Eigen::VectorXd m, Eigen::VectorXd v, int steps) {
  if (m.size() != m_.size() || v.size() != v_.size() || steps < 0) {
    throw InvalidArgumentError("Adam: bad restore state");
  }
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = steps;
}

// --- MinimaxProblem -----------------------------------------------------

/// Per-batch graphs. The reparameterized path composes the operator with
/// z = R(eps; lambda) and differentiates straight through; the score path
/// keeps z free and assembles op * score + (d op / d lambda at fixed z).
struct MinimaxProblem::Built {
  Graph g;
  NodeId op;
  std::vector<NodeId> dlambda;    // reparam path: total derivative graphs
  std::vector<NodeId> dtheta;
  std::vector<NodeId> scores;     // score path only
  std::vector<NodeId> dexplicit;  // score path: fixed-z lambda derivative
  std::unique_ptr<Evaluator> ev;
  std::unique_ptr<Sampler> sampler;  // score path draws z numerically
};

struct MinimaxProblem::SetStats {
  double op_mean = 0.0;
  Eigen::VectorXd lambda_mean;
  Eigen::VectorXd theta_mean;
};

namespace {

int flat_size_of(const std::vector<ParamSpec>& spec) {
  int n = 0;
  for (const auto& s : spec) n += s.shape.size();
  return n;
}

// Appends an evaluated node (scalar or vector) into out at offset `at`.
int append_value(Evaluator& ev, const Graph& g, NodeId id, Eigen::VectorXd& out,
                 int at) {
  const Shape s = g.shape(id);
  if (s.is_scalar()) {
    out[at] = ev.scalar(id);
    return at + 1;
  }
  out.segment(at, s.size()) = ev.vector(id);
  return at + s.size();
}

}  // namespace

MinimaxProblem::MinimaxProblem(const Model& model,
                               const VariationalFamily& family,
                               const OperatorObjective& objective,
                               const TestFunction* f, EstimatorKind estimator)
    : model_(&model),
      family_(&family),
      objective_(objective),
      f_(objective.needs_test_function() ? f : nullptr),
      estimator_(estimator) {
  objective_.check_compatible(family, f);
  if (model.latent_dim() != family.latent_dim()) {
    throw IncompatibleError("family dimension differs from model");
  }
  if (estimator_ == EstimatorKind::kScore && !family.has_density()) {
    throw IncompatibleError("score estimator needs a family with a density");
  }
  rebuild();
}

MinimaxProblem::~MinimaxProblem() = default;
MinimaxProblem::MinimaxProblem(MinimaxProblem&&) noexcept = default;
MinimaxProblem& MinimaxProblem::operator=(MinimaxProblem&&) noexcept = default;

void MinimaxProblem::set_batch(std::span<const int> batch) {
  batch_.assign(batch.begin(), batch.end());
  rebuild();
}

void MinimaxProblem::rebuild() {
  built_ = std::make_unique<Built>();
  Built& b = *built_;
  Graph& g = b.g;

  const bool reparam = estimator_ == EstimatorKind::kReparam;
  NodeId z = reparam ? family_->reparam_graph(g)
                     : g.input("z", Shape::vector(family_->latent_dim()));
  b.op = objective_.op == OperatorKind::kLangevinStein
             ? apply_ls(g, *model_, *f_, z, batch_)
             : apply_kl(g, *model_, *family_, z, batch_);

  std::vector<NodeId> lambda_ids;
  for (const auto& s : family_->param_spec()) {
    NodeId id = g.find_variable(s.name);
    if (!id.valid()) id = g.param(s.name, s.shape);
    lambda_ids.push_back(id);
  }
  std::vector<NodeId> theta_ids;
  if (f_ != nullptr) {
    for (const auto& s : f_->param_spec()) {
      theta_ids.push_back(g.find_variable(s.name));
    }
  }

  if (reparam) {
    std::vector<NodeId> wrt = lambda_ids;
    wrt.insert(wrt.end(), theta_ids.begin(), theta_ids.end());
    std::vector<NodeId> grads = grad_multi(g, b.op, wrt, {});
    b.dlambda.assign(grads.begin(),
                     grads.begin() + static_cast<long>(lambda_ids.size()));
    b.dtheta.assign(grads.begin() + static_cast<long>(lambda_ids.size()),
                    grads.end());
  } else {
    NodeId logq = family_->log_density_graph(g, z);
    b.scores = grad_multi(g, logq, lambda_ids, {});
    b.dexplicit = grad_multi(g, b.op, lambda_ids, {});
    if (!theta_ids.empty()) {
      b.dtheta = grad_multi(g, b.op, theta_ids, {});
    }
    b.sampler = std::make_unique<Sampler>(*family_);
  }
  b.ev = std::make_unique<Evaluator>(g);
}

MinimaxProblem::SetStats MinimaxProblem::evaluate_set(const ParamSet& lambda,
                                                      int samples,
                                                      RngStream& rng,
                                                      bool want_lambda,
                                                      bool want_theta) {
  Built& b = *built_;
  Evaluator& ev = *b.ev;
  const bool reparam = estimator_ == EstimatorKind::kReparam;
  const int lam_n = flat_size_of(family_->param_spec());
  const int th_n = f_ != nullptr ? flat_size_of(f_->param_spec()) : 0;

  SetStats stats;
  stats.lambda_mean = Eigen::VectorXd::Zero(want_lambda ? lam_n : 0);
  stats.theta_mean = Eigen::VectorXd::Zero(want_theta ? th_n : 0);
  Eigen::VectorXd row(lam_n);

  for (int s = 0; s < samples; ++s) {
    if (reparam) {
      ev.bind("eps", rng.normal_vector(family_->noise_dim()));
    } else {
      ev.bind("z", b.sampler->draw(lambda, rng));
    }
    const double op = ev.scalar(b.op);
    stats.op_mean += op;
    if (want_lambda) {
      int at = 0;
      if (reparam) {
        for (NodeId id : b.dlambda) at = append_value(ev, b.g, id, row, at);
        stats.lambda_mean += row;
      } else {
        for (std::size_t i = 0; i < b.scores.size(); ++i) {
          at = append_value(ev, b.g, b.scores[i], row, at);
        }
        Eigen::VectorXd expl(lam_n);
        int ea = 0;
        for (std::size_t i = 0; i < b.dexplicit.size(); ++i) {
          ea = append_value(ev, b.g, b.dexplicit[i], expl, ea);
        }
        stats.lambda_mean += op * row + expl;
      }
    }
    if (want_theta) {
      Eigen::VectorXd trow(th_n);
      int at = 0;
      for (NodeId id : b.dtheta) at = append_value(ev, b.g, id, trow, at);
      stats.theta_mean += trow;
    }
  }
  const double inv = 1.0 / static_cast<double>(samples);
  stats.op_mean *= inv;
  stats.lambda_mean *= inv;
  stats.theta_mean *= inv;
  return stats;
}

GradEstimate MinimaxProblem::impl_estimate(const ParamSet& lambda,
                                           const ParamSet& theta,
                                           int samples_per_set, RngStream& rng,
                                           bool single_set) {
  if (samples_per_set < 1) {
    throw InvalidArgumentError("estimate: need at least one sample per set");
  }
  Built& b = *built_;
  lambda.bind(*b.ev);
  if (f_ != nullptr) theta.bind(*b.ev);

  GradEstimate out;
  const bool square = objective_.distance == DistanceKind::kSquare;
  if (!square) {
    // Identity distance: the leading mean factor degenerates to 1 and the
    // gradient is the plain mean of per-sample gradients over one set.
    SetStats s = evaluate_set(lambda, samples_per_set, rng, true, false);
    out.objective = s.op_mean;
    out.lambda_grad = s.lambda_mean;
    out.theta_grad = Eigen::VectorXd::Zero(
        f_ != nullptr ? flat_size_of(f_->param_spec()) : 0);
    return out;
  }

  if (single_set) {
    SetStats s = evaluate_set(lambda, samples_per_set, rng, true, f_ != nullptr);
    out.objective = s.op_mean * s.op_mean;
    out.lambda_grad = 2.0 * s.op_mean * s.lambda_mean;
    if (f_ != nullptr) out.theta_grad = 2.0 * s.op_mean * s.theta_mean;
    return out;
  }

  SetStats a = evaluate_set(lambda, samples_per_set, rng, false, false);
  SetStats bset = evaluate_set(lambda, samples_per_set, rng, true, false);
  out.objective = a.op_mean * bset.op_mean;
  out.lambda_grad = 2.0 * a.op_mean * bset.lambda_mean;
  if (f_ != nullptr && flat_size_of(f_->param_spec()) > 0) {
    SetStats a2 = evaluate_set(lambda, samples_per_set, rng, false, false);
    SetStats b2 = evaluate_set(lambda, samples_per_set, rng, false, true);
    out.theta_grad = 2.0 * a2.op_mean * b2.theta_mean;
  }
  return out;
}

GradEstimate MinimaxProblem::estimate(const ParamSet& lambda,
                                      const ParamSet& theta,
                                      int samples_per_set, RngStream& rng) {
  return impl_estimate(lambda, theta, samples_per_set, rng, false);
}

GradEstimate MinimaxProblem::estimate_single_set(const ParamSet& lambda,
                                                 const ParamSet& theta,
                                                 int samples, RngStream& rng) {
  return impl_estimate(lambda, theta, samples, rng, true);
}

// --- run_minimax --------------------------------------------------------

namespace {

// Stream path tags so distinct purposes never share a substream.
constexpr std::uint64_t kPathInitLambda = 1;
constexpr std::uint64_t kPathInitTheta = 2;
constexpr std::uint64_t kPathIteration = 3;
constexpr std::uint64_t kPathBatch = 4;

}  // namespace

FitResult run_minimax(const Model& model, const VariationalFamily& family,
                      const OperatorObjective& objective,
                      const TestFunction* f, const TrainConfig& config,
                      const ParamSet* lambda_init, const ParamSet* theta_init,
                      const MetricsCallback& callback) {
  if (config.iterations < 1) {
    throw InvalidArgumentError("run_minimax: iterations must be >= 1");
  }
  if (config.metrics_every < 1) {
    throw InvalidArgumentError("run_minimax: metrics_every must be >= 1");
  }
  const bool subsample =
      config.batch_size > 0 && model.num_datapoints() > 0 &&
      config.batch_size < model.num_datapoints();

  MinimaxProblem problem(model, family, objective, f, config.estimator);
  const TestFunction* used_f =
      objective.needs_test_function() ? f : nullptr;

  FitResult result;
  if (lambda_init != nullptr) {
    result.lambda = *lambda_init;
  } else {
    RngStream r = RngStream::derive(config.seed, {kPathInitLambda});
    result.lambda = family.init_params(r);
  }
  if (used_f != nullptr) {
    if (theta_init != nullptr) {
      result.theta = *theta_init;
    } else {
      RngStream r = RngStream::derive(config.seed, {kPathInitTheta});
      result.theta = used_f->init_params(r);
    }
  }

  Eigen::VectorXd lambda_flat = result.lambda.flat();
  Eigen::VectorXd theta_flat = result.theta.flat();
  Adam adam_lambda(static_cast<int>(lambda_flat.size()), config.lr_lambda);
  Adam adam_theta(static_cast<int>(theta_flat.size()), config.lr_theta);

  for (int k = 0; k < config.iterations; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    if (subsample) {
      RngStream br = RngStream::derive(
          config.seed, {kPathBatch, static_cast<std::uint64_t>(k)});
      problem.set_batch(br.sample_without_replacement(model.num_datapoints(),
                                                      config.batch_size));
    }
    RngStream it = RngStream::derive(
        config.seed, {kPathIteration, static_cast<std::uint64_t>(k)});
    GradEstimate est;
    try {
      est = config.single_set
                ? problem.estimate_single_set(result.lambda, result.theta,
                                              config.samples_per_set, it)
                : problem.estimate(result.lambda, result.theta,
                                   config.samples_per_set, it);
    } catch (const NonFiniteError& e) {
      throw NumericalAbort(e.what(), k);
    }
    if (!std::isfinite(est.objective) || !est.lambda_grad.allFinite() ||
        !est.theta_grad.allFinite()) {
      throw NumericalAbort("non-finite gradient estimate", k);
    }

    const bool do_theta = !config.alternating || k % 2 == 0;
    const bool do_lambda = !config.alternating || k % 2 == 1;
    if (do_lambda) {
      if (config.lr_lambda_end != 1.0 && config.iterations > 1) {
        const double frac =
            static_cast<double>(k) / (config.iterations - 1);
        adam_lambda.set_learning_rate(
            config.lr_lambda * (1.0 - (1.0 - config.lr_lambda_end) * frac));
      }
      adam_lambda.step(lambda_flat, est.lambda_grad);
      result.lambda.set_flat(lambda_flat);
    }
    if (used_f != nullptr && do_theta && est.theta_grad.size() > 0) {
      adam_theta.step(theta_flat, -est.theta_grad);
      if (config.theta_l2 > 0.0) {
        theta_flat *= 1.0 - config.lr_theta * config.theta_l2;
      }
      result.theta.set_flat(theta_flat);
    }

    result.final_objective = est.objective;
    result.iterations_run = k + 1;
    if (k % config.metrics_every == 0 || k == config.iterations - 1) {
      IterationStats stats;
      stats.iteration = k;
      stats.objective = est.objective;
      stats.grad_norm_lambda = est.lambda_grad.norm();
      stats.grad_norm_theta =
          est.theta_grad.size() > 0 ? est.theta_grad.norm() : 0.0;
      stats.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      stats.lambda = lambda_flat;
      result.history.push_back(stats);
      if (callback) callback(result.history.back());
    }
  }
  result.adam_lambda_m = adam_lambda.first_moment();
  result.adam_lambda_v = adam_lambda.second_moment();
  result.adam_lambda_steps = adam_lambda.steps_taken();
  result.adam_theta_m = adam_theta.first_moment();
  result.adam_theta_v = adam_theta.second_moment();
  result.adam_theta_steps = adam_theta.steps_taken();
  return result;
}

}  // namespace opvi

// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "opvi/io.hpp"
#include "opvi/models.hpp"
#include "opvi/optimizer.hpp"
#include "opvi/testfn.hpp"
#include "opvi/variational.hpp"

namespace opvi {

enum class FamilyKind {
  kGaussian,   // mean-field Gaussian
  kProgram,    // relu-network variational program
  kSignSplit,  // 1-d two-branch program with disconnected support
};

struct HistogramSpec {
  int bins = 80;
  double lo = -8.0;
  double hi = 8.0;
  int samples = 100000;
};

/// Inputs of the factor-analysis completion benchmark.
struct LfaSettings {
  std::string model_checkpoint;  // OPVC file with W, b, dims
  std::string test_data;         // OPVI file, one image per row
  std::uint64_t mask_seed = 0;   // drives the held-out-half masks
  int predictive_samples = 100;  // posterior draws per evaluation
};

/// Synthetic-data generation plus model pre-training for the
/// factor-analysis benchmark.
struct PretrainSettings {
  int latent_dim = 10;
  int rows = 8;
  int cols = 8;
  int train_images = 200;
  int test_images = 50;
  int iterations = 400;  // full-batch joint MAP ascent steps
  double step_size = 0.05;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::string experiment;  // "mixture" or "lfa"
  OperatorKind objective = OperatorKind::kLangevinStein;
  FamilyKind family = FamilyKind::kGaussian;
  TrainConfig train;
  std::string output_dir = ".";
  HistogramSpec histogram;
  LfaSettings lfa;
  PretrainSettings pretrain;
  double f_bound = 2.0;  // test-function layer bound for LS runs
  int f_hidden = 0;      // 0 = twice the latent dimension
  // Gaussian-family initialization. The mixture defaults offset the mean:
  // an exactly centered start sits on a symmetric stationary point of the
  // two-mode target and never commits to a mode.
  double q_init_mean = 0.0;
  double q_init_stddev = 1.0;
};

/// Tuned desk-scale defaults for each experiment and method pair. Config
/// files start from these and override field by field.
ExperimentConfig mixture_defaults(OperatorKind objective, FamilyKind family);
ExperimentConfig lfa_defaults(OperatorKind objective, FamilyKind family);

/// Parses the JSON text of a config file. Unknown keys, type mismatches and
/// out-of-range values raise ConfigError.
ExperimentConfig parse_config(const std::string& json_text);

/// Reads and parses a config file; file problems also raise ConfigError.
ExperimentConfig load_config(const std::string& path);

/// Instantiates the configured variational family at the given latent
/// dimension. The sign-split program is 1-d only.
std::unique_ptr<VariationalFamily> make_family(FamilyKind kind,
                                               int latent_dim);

/// Builds the operator objective plus, for Langevin-Stein, the bounded-MLP
/// test function at the configured width and bound.
std::unique_ptr<TestFunction> make_test_function(const ExperimentConfig& cfg,
                                                 int latent_dim);

/// Bins samples on the configured grid. Out-of-range samples land in the
/// nearest edge bin, so the counts always sum to the sample count.
Eigen::VectorXi histogram_counts(std::span<const double> samples,
                                 const HistogramSpec& spec);

struct MixtureResult {
  FitResult fit;
  std::vector<double> samples;  // histogram.samples draws from fitted q
  Eigen::VectorXi counts;
  double sample_mean = 0.0;
  double frac_negative = 0.0;       // z < 0
  double frac_positive = 0.0;       // z > 0
  double frac_near_minus = 0.0;     // |z + 3| <= 1.5
  double frac_near_plus = 0.0;      // |z - 3| <= 1.5
  std::string metrics_path, histogram_path, checkpoint_path;
};

/// Fits the configured (objective, family) pair against the two-mode
/// mixture target and writes metrics, a sample histogram with the analytic
/// target density on the same grid, and a fit checkpoint.
MixtureResult exp_mixture(const ExperimentConfig& cfg);

struct CompletionResult {
  Eigen::VectorXd per_image_loglik;  // held-out-half log-likelihoods
  double mean_loglik = 0.0;
  std::uint64_t mask_seed = 0;
  /// Mean held-out log-likelihood trace: (optimizer updates applied,
  /// mean over images). Entry 0 is the untouched initialization.
  std::vector<std::pair<int, double>> trace;
  std::string completion_path, trace_path, checkpoint_path;
};

/// Per-image posterior fits for the completion benchmark: each test image
/// keeps a random half of its pixels, the posterior over the latent code is
/// fit from that half, and the held-out half is scored under the posterior
/// predictive.
CompletionResult exp_lfa(const ExperimentConfig& cfg);

/// Generates synthetic binary images from a random factor-analysis model,
/// then fits model weights to the training split by full-batch joint MAP
/// ascent over weights, biases, and per-image latents. Writes train.opvi,
/// test.opvi, and model.opvc into the output directory.
struct PretrainResult {
  std::string train_path, test_path, checkpoint_path;
  double final_train_loglik_per_image = 0.0;
  Eigen::MatrixXd weights;  // K x P
  Eigen::VectorXd bias;
};
PretrainResult pretrain_lfa(const ExperimentConfig& cfg);

/// A fitted family reconstructed from the meta sections of a fit
/// checkpoint, for sampling without the original config.
struct LoadedFit {
  std::unique_ptr<VariationalFamily> family;
  ParamSet lambda;
  OperatorKind objective = OperatorKind::kLangevinStein;
  FamilyKind family_kind = FamilyKind::kGaussian;
  bool is_mixture = false;
  double mixture_mean1 = -3.0, mixture_mean2 = 3.0, mixture_stddev = 1.0;
};
LoadedFit load_fit(const Checkpoint& cp);

/// log[(1/S) sum_s prod_{p in heldout} Bernoulli(x_p | sigmoid(w_p.z_s +
/// b_p))] via log-sum-exp. Rows of `samples` are posterior draws. An empty
/// held-out set gives 0 (an empty product under the log).
double posterior_predictive_loglik(
    const Eigen::Ref<const Eigen::MatrixXd>& weights,  // K x P
    const Eigen::Ref<const Eigen::VectorXd>& bias,     // P
    const Eigen::Ref<const Eigen::MatrixXd>& samples,  // S x K
    const Eigen::Ref<const Eigen::VectorXd>& x,        // P, binary
    std::span<const int> heldout);

}  // namespace opvi

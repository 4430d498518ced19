// Copyright 2026 The opvi Authors
// SPDX-License-Identifier: Apache-2.0

#include "opvi/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string_view>

#include "json.hpp"
#include "opvi/errors.hpp"
#include "opvi/operators.hpp"

namespace fs = std::filesystem;

namespace opvi {
namespace {

using nlohmann::json;

// Experiment-level rng path tags. The optimizer owns tags 1..4 under the
// training seed; everything here stays clear of them.
constexpr std::uint64_t kPathHistogram = 11;
constexpr std::uint64_t kPathMask = 12;
constexpr std::uint64_t kPathImageSeed = 13;
constexpr std::uint64_t kPathEvalNoise = 14;
constexpr std::uint64_t kPathGenerator = 15;
constexpr std::uint64_t kPathPretrainInit = 16;
constexpr std::uint64_t kPathImageLambdaInit = 17;
constexpr std::uint64_t kPathImageThetaInit = 18;

[[noreturn]] void config_fail(const std::string& msg) {
  throw ConfigError(msg);
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<std::string_view> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) ==
        allowed.end()) {
      config_fail("unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double get_number(const json& obj, const char* key, double fallback) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number()) config_fail(std::string(key) + " must be a number");
  return v->get<double>();
}

int get_int(const json& obj, const char* key, int fallback) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number_integer()) {
    config_fail(std::string(key) + " must be an integer");
  }
  return v->get<int>();
}

std::uint64_t get_u64(const json& obj, const char* key,
                      std::uint64_t fallback) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number_integer() ||
      (v->is_number_integer() && !v->is_number_unsigned() &&
       v->get<std::int64_t>() < 0)) {
    config_fail(std::string(key) + " must be a nonnegative integer");
  }
  return v->get<std::uint64_t>();
}

bool get_bool(const json& obj, const char* key, bool fallback) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_boolean()) config_fail(std::string(key) + " must be a boolean");
  return v->get<bool>();
}

std::string get_string(const json& obj, const char* key,
                       const std::string& fallback) {
  const json* v = find(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_string()) config_fail(std::string(key) + " must be a string");
  return v->get<std::string>();
}

OperatorKind parse_objective(const std::string& s) {
  if (s == "ls" || s == "langevin_stein") return OperatorKind::kLangevinStein;
  if (s == "kl") return OperatorKind::kKl;
  config_fail("objective must be \"ls\" or \"kl\", got \"" + s + "\"");
}

FamilyKind parse_family(const std::string& s) {
  if (s == "gaussian") return FamilyKind::kGaussian;
  if (s == "program") return FamilyKind::kProgram;
  if (s == "sign_split") return FamilyKind::kSignSplit;
  config_fail("family must be \"gaussian\", \"program\" or \"sign_split\", "
              "got \"" + s + "\"");
}

EstimatorKind parse_estimator(const std::string& s) {
  if (s == "reparam") return EstimatorKind::kReparam;
  if (s == "score") return EstimatorKind::kScore;
  config_fail("estimator must be \"reparam\" or \"score\", got \"" + s +
              "\"");
}

void apply_train(const json& j, TrainConfig& t) {
  check_keys(j, "train",
             {"iterations", "samples_per_set", "lr_lambda", "lr_theta",
              "theta_l2", "lr_lambda_end", "seed", "estimator", "alternating",
              "single_set", "batch_size", "metrics_every"});
  t.iterations = get_int(j, "iterations", t.iterations);
  t.samples_per_set = get_int(j, "samples_per_set", t.samples_per_set);
  t.lr_lambda = get_number(j, "lr_lambda", t.lr_lambda);
  t.lr_theta = get_number(j, "lr_theta", t.lr_theta);
  t.theta_l2 = get_number(j, "theta_l2", t.theta_l2);
  t.lr_lambda_end = get_number(j, "lr_lambda_end", t.lr_lambda_end);
  t.seed = get_u64(j, "seed", t.seed);
  if (const json* v = find(j, "estimator")) {
    if (!v->is_string()) config_fail("estimator must be a string");
    t.estimator = parse_estimator(v->get<std::string>());
  }
  t.alternating = get_bool(j, "alternating", t.alternating);
  t.single_set = get_bool(j, "single_set", t.single_set);
  t.batch_size = get_int(j, "batch_size", t.batch_size);
  t.metrics_every = get_int(j, "metrics_every", t.metrics_every);
  if (t.iterations < 1) config_fail("iterations must be >= 1");
  if (t.samples_per_set < 1) config_fail("samples_per_set must be >= 1");
  if (!(t.lr_lambda > 0.0) || !(t.lr_theta > 0.0)) {
    config_fail("learning rates must be positive");
  }
  if (t.theta_l2 < 0.0) config_fail("theta_l2 must be >= 0");
  if (!(t.lr_lambda_end > 0.0) || t.lr_lambda_end > 1.0) {
    config_fail("lr_lambda_end must be in (0, 1]");
  }
  if (t.batch_size < 0) config_fail("batch_size must be >= 0");
  if (t.metrics_every < 1) config_fail("metrics_every must be >= 1");
}

void apply_histogram(const json& j, HistogramSpec& h) {
  check_keys(j, "histogram", {"bins", "lo", "hi", "samples"});
  h.bins = get_int(j, "bins", h.bins);
  h.lo = get_number(j, "lo", h.lo);
  h.hi = get_number(j, "hi", h.hi);
  h.samples = get_int(j, "samples", h.samples);
  if (h.bins < 1) config_fail("histogram bins must be >= 1");
  if (!(h.hi > h.lo)) config_fail("histogram needs hi > lo");
  if (h.samples < 1) config_fail("histogram samples must be >= 1");
}

void apply_lfa(const json& j, LfaSettings& l) {
  check_keys(j, "lfa",
             {"model_checkpoint", "test_data", "mask_seed",
              "predictive_samples"});
  l.model_checkpoint = get_string(j, "model_checkpoint", l.model_checkpoint);
  l.test_data = get_string(j, "test_data", l.test_data);
  l.mask_seed = get_u64(j, "mask_seed", l.mask_seed);
  l.predictive_samples =
      get_int(j, "predictive_samples", l.predictive_samples);
  if (l.predictive_samples < 1) {
    config_fail("predictive_samples must be >= 1");
  }
}

void apply_pretrain(const json& j, PretrainSettings& p) {
  check_keys(j, "pretrain",
             {"latent_dim", "rows", "cols", "train_images", "test_images",
              "iterations", "step_size", "seed"});
  p.latent_dim = get_int(j, "latent_dim", p.latent_dim);
  p.rows = get_int(j, "rows", p.rows);
  p.cols = get_int(j, "cols", p.cols);
  p.train_images = get_int(j, "train_images", p.train_images);
  p.test_images = get_int(j, "test_images", p.test_images);
  p.iterations = get_int(j, "iterations", p.iterations);
  p.step_size = get_number(j, "step_size", p.step_size);
  p.seed = get_u64(j, "seed", p.seed);
  if (p.latent_dim < 1 || p.rows < 1 || p.cols < 1) {
    config_fail("pretrain dimensions must be >= 1");
  }
  if (p.train_images < 1 || p.test_images < 1) {
    config_fail("pretrain image counts must be >= 1");
  }
  if (p.iterations < 0) config_fail("pretrain iterations must be >= 0");
  if (!(p.step_size > 0.0)) config_fail("pretrain step_size must be > 0");
}

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

std::string zero_pad(int i, int width = 4) {
  std::ostringstream ss;
  ss << std::setw(width) << std::setfill('0') << i;
  return ss.str();
}

void ensure_output_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) config_fail("cannot create output directory " + dir + ": " +
                      ec.message());
}

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << std::setprecision(17);
  return out;
}

double family_code(FamilyKind k) { return static_cast<double>(k); }
double objective_code(OperatorKind k) {
  return k == OperatorKind::kKl ? 1.0 : 0.0;
}

std::unique_ptr<VariationalFamily> make_family_cfg(
    const ExperimentConfig& cfg, int latent_dim) {
  if (cfg.family == FamilyKind::kGaussian) {
    return std::make_unique<MeanFieldGaussian>(latent_dim, cfg.q_init_mean,
                                               cfg.q_init_stddev);
  }
  return make_family(cfg.family, latent_dim);
}

int metrics_lambda_columns(const VariationalFamily& family) {
  if (family.latent_dim() > 4) return 0;
  return ParamSet(family.param_spec()).flat_size();
}

void write_fit_sections(Checkpoint& cp, const FitResult& fit) {
  cp["lambda"] = fit.lambda.flat();
  cp["theta"] = fit.theta.flat();
  cp["adam_lambda_m"] = fit.adam_lambda_m;
  cp["adam_lambda_v"] = fit.adam_lambda_v;
  cp["adam_theta_m"] = fit.adam_theta_m;
  cp["adam_theta_v"] = fit.adam_theta_v;
  cp["adam_steps"] = Eigen::Vector2d(fit.adam_lambda_steps,
                                     fit.adam_theta_steps);
}

struct LfaModelParams {
  Eigen::MatrixXd weights;  // K x P
  Eigen::VectorXd bias;     // P
};

LfaModelParams read_model_checkpoint(const std::string& path) {
  Checkpoint cp = load_checkpoint(path);
  const Eigen::VectorXd& dims = checkpoint_section(cp, "dims");
  if (dims.size() != 2 || dims[0] < 1 || dims[1] < 1) {
    throw IoError("model checkpoint has malformed dims section");
  }
  const int k = static_cast<int>(dims[0]);
  const int p = static_cast<int>(dims[1]);
  const Eigen::VectorXd& w = checkpoint_section(cp, "W");
  const Eigen::VectorXd& b = checkpoint_section(cp, "b");
  if (w.size() != static_cast<Eigen::Index>(k) * p || b.size() != p) {
    throw IoError("model checkpoint sections disagree with dims");
  }
  LfaModelParams out;
  out.weights = Eigen::Map<const Eigen::Matrix<
      double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), k,
                                                                p);
  out.bias = b;
  return out;
}

}  // namespace

ExperimentConfig mixture_defaults(OperatorKind objective, FamilyKind family) {
  ExperimentConfig cfg;
  cfg.experiment = "mixture";
  cfg.objective = objective;
  cfg.family = family;
  cfg.train.metrics_every = 25;
  cfg.train.samples_per_set = 25;
  cfg.train.lr_lambda = 0.02;
  cfg.train.lr_theta = 0.05;
  cfg.q_init_mean = 0.5;
  if (objective == OperatorKind::kKl) {
    cfg.train.iterations = 1500;
    cfg.train.samples_per_set = 50;
  } else {
    cfg.train.iterations = family == FamilyKind::kGaussian ? 3000 : 4000;
  }
  return cfg;
}

ExperimentConfig lfa_defaults(OperatorKind objective, FamilyKind family) {
  ExperimentConfig cfg;
  cfg.experiment = "lfa";
  cfg.objective = objective;
  cfg.family = family;
  cfg.train.metrics_every = 25;
  cfg.train.lr_lambda_end = 0.05;
  if (objective == OperatorKind::kKl) {
    cfg.train.iterations = 500;
    cfg.train.samples_per_set = 20;
    cfg.train.lr_lambda = 0.01;
  } else {
    // Minimax rows. The decayed test function and the annealed lambda rate
    // keep the late run parked at the fit instead of jittering off it; the
    // many-parameter program needs the smaller rate.
    cfg.train.iterations = 600;
    cfg.train.samples_per_set = 40;
    cfg.train.lr_lambda = family == FamilyKind::kProgram ? 0.002 : 0.01;
    cfg.train.lr_theta = 0.02;
    cfg.train.theta_l2 = 1.0;
    cfg.f_hidden = 8;
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    config_fail(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) config_fail("config root must be a JSON object");
  check_keys(j, "config",
             {"experiment", "objective", "family", "output_dir", "train",
              "histogram", "lfa", "pretrain", "f_bound", "f_hidden",
              "q_init_mean", "q_init_stddev"});

  const std::string experiment = get_string(j, "experiment", "");
  OperatorKind objective = parse_objective(get_string(j, "objective", "ls"));
  FamilyKind family = parse_family(get_string(j, "family", "gaussian"));

  ExperimentConfig cfg;
  if (experiment == "mixture") {
    cfg = mixture_defaults(objective, family);
  } else if (experiment == "lfa") {
    cfg = lfa_defaults(objective, family);
  } else {
    config_fail("experiment must be \"mixture\" or \"lfa\"");
  }

  cfg.output_dir = get_string(j, "output_dir", cfg.output_dir);
  if (cfg.output_dir.empty()) config_fail("output_dir must be nonempty");
  cfg.f_bound = get_number(j, "f_bound", cfg.f_bound);
  cfg.f_hidden = get_int(j, "f_hidden", cfg.f_hidden);
  if (!(cfg.f_bound > 0.0)) config_fail("f_bound must be > 0");
  if (cfg.f_hidden < 0) config_fail("f_hidden must be >= 0");
  cfg.q_init_mean = get_number(j, "q_init_mean", cfg.q_init_mean);
  cfg.q_init_stddev = get_number(j, "q_init_stddev", cfg.q_init_stddev);
  if (!(cfg.q_init_stddev > 0.0)) config_fail("q_init_stddev must be > 0");

  if (const json* v = find(j, "train")) {
    if (!v->is_object()) config_fail("train must be an object");
    apply_train(*v, cfg.train);
  }
  if (const json* v = find(j, "histogram")) {
    if (!v->is_object()) config_fail("histogram must be an object");
    apply_histogram(*v, cfg.histogram);
  }
  if (const json* v = find(j, "lfa")) {
    if (!v->is_object()) config_fail("lfa must be an object");
    apply_lfa(*v, cfg.lfa);
  }
  if (const json* v = find(j, "pretrain")) {
    if (!v->is_object()) config_fail("pretrain must be an object");
    apply_pretrain(*v, cfg.pretrain);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_fail("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::unique_ptr<VariationalFamily> make_family(FamilyKind kind,
                                               int latent_dim) {
  switch (kind) {
    case FamilyKind::kGaussian:
      return std::make_unique<MeanFieldGaussian>(latent_dim);
    case FamilyKind::kProgram:
      return std::make_unique<VariationalProgram>(latent_dim);
    case FamilyKind::kSignSplit:
      if (latent_dim != 1) {
        throw IncompatibleError(
            "the sign-split program is one-dimensional; latent dimension " +
            std::to_string(latent_dim) + " needs gaussian or program");
      }
      return std::make_unique<SignSplitProgram>();
  }
  throw InvalidArgumentError("unknown family kind");
}

std::unique_ptr<TestFunction> make_test_function(const ExperimentConfig& cfg,
                                                 int latent_dim) {
  return std::make_unique<BoundedMlp>(latent_dim, cfg.f_bound,
                                      BoundKind::kLayerNorm, cfg.f_hidden);
}

Eigen::VectorXi histogram_counts(std::span<const double> samples,
                                 const HistogramSpec& spec) {
  if (spec.bins < 1 || !(spec.hi > spec.lo)) {
    throw InvalidArgumentError("histogram spec needs bins >= 1 and hi > lo");
  }
  const double width = (spec.hi - spec.lo) / spec.bins;
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(spec.bins);
  for (double z : samples) {
    int idx = static_cast<int>(std::floor((z - spec.lo) / width));
    idx = std::clamp(idx, 0, spec.bins - 1);
    counts[idx] += 1;
  }
  return counts;
}

MixtureResult exp_mixture(const ExperimentConfig& cfg) {
  if (cfg.experiment != "mixture") {
    config_fail("exp_mixture needs experiment = \"mixture\"");
  }
  OperatorObjective objective(cfg.objective);
  if (objective.needs_density() && cfg.family != FamilyKind::kGaussian) {
    throw IncompatibleError(
        "the KL objective needs a variational density, which programs do "
        "not provide; use the gaussian family or the ls objective");
  }
  MixtureTarget target;
  auto family = make_family_cfg(cfg, target.latent_dim());
  std::unique_ptr<TestFunction> f;
  if (objective.needs_test_function()) {
    f = make_test_function(cfg, target.latent_dim());
  }
  ensure_output_dir(cfg.output_dir);

  MixtureResult out;
  out.metrics_path = cfg.output_dir + "/metrics.csv";
  out.histogram_path = cfg.output_dir + "/histogram.csv";
  out.checkpoint_path = cfg.output_dir + "/fit.opvc";

  MetricsWriter metrics(out.metrics_path, metrics_lambda_columns(*family));
  out.fit = run_minimax(target, *family, objective, f.get(), cfg.train,
                        nullptr, nullptr,
                        [&](const IterationStats& s) { metrics.write(s); });

  RngStream hr = RngStream::derive(cfg.train.seed, {kPathHistogram});
  Sampler sampler(*family);
  out.samples.reserve(cfg.histogram.samples);
  double sum = 0.0;
  int n_neg = 0, n_pos = 0, n_minus = 0, n_plus = 0;
  for (int i = 0; i < cfg.histogram.samples; ++i) {
    double z = sampler.draw(out.fit.lambda, hr)[0];
    out.samples.push_back(z);
    sum += z;
    if (z < 0.0) ++n_neg;
    if (z > 0.0) ++n_pos;
    if (std::abs(z + 3.0) <= 1.5) ++n_minus;
    if (std::abs(z - 3.0) <= 1.5) ++n_plus;
  }
  const double n = cfg.histogram.samples;
  out.sample_mean = sum / n;
  out.frac_negative = n_neg / n;
  out.frac_positive = n_pos / n;
  out.frac_near_minus = n_minus / n;
  out.frac_near_plus = n_plus / n;
  out.counts = histogram_counts(out.samples, cfg.histogram);

  std::ofstream hist = open_csv(out.histogram_path);
  hist << "bin_lo,bin_hi,count,target_density\n";
  const double width = (cfg.histogram.hi - cfg.histogram.lo) /
                       cfg.histogram.bins;
  for (int b = 0; b < cfg.histogram.bins; ++b) {
    const double lo = cfg.histogram.lo + b * width;
    const double hi =
        b + 1 == cfg.histogram.bins ? cfg.histogram.hi : lo + width;
    const double center = lo + 0.5 * width;
    hist << lo << ',' << hi << ',' << out.counts[b] << ','
         << std::exp(target.log_density(center)) << "\n";
  }
  if (!hist) throw IoError("failed writing " + out.histogram_path);

  Checkpoint cp;
  write_fit_sections(cp, out.fit);
  cp["meta_experiment"] = Eigen::VectorXd::Zero(1);
  cp["meta_family"] = Eigen::VectorXd::Constant(1, family_code(cfg.family));
  cp["meta_objective"] =
      Eigen::VectorXd::Constant(1, objective_code(cfg.objective));
  cp["meta_latent_dim"] = Eigen::VectorXd::Constant(1, 1.0);
  cp["meta_mixture"] =
      Eigen::Vector3d(target.mean1(), target.mean2(), target.stddev());
  save_checkpoint(out.checkpoint_path, cp);
  return out;
}

LoadedFit load_fit(const Checkpoint& cp) {
  LoadedFit out;
  const Eigen::VectorXd& fam = checkpoint_section(cp, "meta_family");
  const Eigen::VectorXd& obj = checkpoint_section(cp, "meta_objective");
  const Eigen::VectorXd& dim = checkpoint_section(cp, "meta_latent_dim");
  if (fam.size() != 1 || obj.size() != 1 || dim.size() != 1) {
    throw IoError("checkpoint meta sections are malformed");
  }
  const int fam_code = static_cast<int>(fam[0]);
  if (fam_code < 0 || fam_code > 2) {
    throw IoError("checkpoint has unknown family code");
  }
  out.family_kind = static_cast<FamilyKind>(fam_code);
  out.objective =
      obj[0] == 1.0 ? OperatorKind::kKl : OperatorKind::kLangevinStein;
  out.family = make_family(out.family_kind, static_cast<int>(dim[0]));
  out.lambda = ParamSet(out.family->param_spec());
  const Eigen::VectorXd& lambda = checkpoint_section(cp, "lambda");
  if (lambda.size() != out.lambda.flat_size()) {
    throw IoError("checkpoint lambda section has " +
                  std::to_string(lambda.size()) + " values but the family "
                  "needs " + std::to_string(out.lambda.flat_size()));
  }
  out.lambda.set_flat(lambda);
  if (auto it = cp.find("meta_mixture"); it != cp.end()) {
    if (it->second.size() != 3) {
      throw IoError("checkpoint meta_mixture section is malformed");
    }
    out.is_mixture = true;
    out.mixture_mean1 = it->second[0];
    out.mixture_mean2 = it->second[1];
    out.mixture_stddev = it->second[2];
  }
  return out;
}

double posterior_predictive_loglik(
    const Eigen::Ref<const Eigen::MatrixXd>& weights,
    const Eigen::Ref<const Eigen::VectorXd>& bias,
    const Eigen::Ref<const Eigen::MatrixXd>& samples,
    const Eigen::Ref<const Eigen::VectorXd>& x,
    std::span<const int> heldout) {
  const Eigen::Index p = weights.cols();
  const Eigen::Index s = samples.rows();
  if (s < 1) {
    throw InvalidArgumentError("need at least one posterior sample");
  }
  if (samples.cols() != weights.rows()) {
    throw InvalidArgumentError("sample dimension does not match the factor "
                               "loading matrix");
  }
  if (bias.size() != p || x.size() != p) {
    throw InvalidArgumentError("pixel dimension mismatch");
  }
  if (heldout.empty()) return 0.0;

  Eigen::VectorXd per_sample = Eigen::VectorXd::Zero(s);
  for (int pix : heldout) {
    if (pix < 0 || pix >= p) {
      throw InvalidArgumentError("held-out pixel index out of range");
    }
    if (x[pix] != 0.0 && x[pix] != 1.0) {
      throw InvalidArgumentError("held-out pixel is not binary");
    }
    Eigen::VectorXd a = samples * weights.col(pix);
    a.array() += bias[pix];
    // log sigma(a) = -softplus(-a); log(1 - sigma(a)) = -softplus(a)
    for (Eigen::Index j = 0; j < s; ++j) {
      per_sample[j] -= softplus(x[pix] == 1.0 ? -a[j] : a[j]);
    }
  }
  const double mx = per_sample.maxCoeff();
  return mx + std::log((per_sample.array() - mx).exp().sum()) -
         std::log(static_cast<double>(s));
}

PretrainResult pretrain_lfa(const ExperimentConfig& cfg) {
  const PretrainSettings& ps = cfg.pretrain;
  const int k = ps.latent_dim;
  const int p = ps.rows * ps.cols;
  const int n_train = ps.train_images;
  const int n_test = ps.test_images;
  ensure_output_dir(cfg.output_dir);

  // Ground-truth generator; scaled so pixel logits have spread ~4, i.e.
  // pixels are close to deterministic given the latent. The observed half
  // of an image then pins the latent down and carries several nats of
  // information about each held-out region.
  RngStream gen = RngStream::derive(ps.seed, {kPathGenerator});
  const double w_scale = 7.0 / std::sqrt(static_cast<double>(k));
  Eigen::MatrixXd w_star(k, p);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < p; ++c) w_star(r, c) = w_scale * gen.normal();
  }
  Eigen::VectorXd b_star(p);
  for (int c = 0; c < p; ++c) b_star[c] = 0.5 * gen.normal();

  auto sample_images = [&](int count) {
    Eigen::MatrixXd images(count, p);
    for (int i = 0; i < count; ++i) {
      Eigen::VectorXd z = gen.normal_vector(k);
      Eigen::VectorXd logits = w_star.transpose() * z + b_star;
      for (int c = 0; c < p; ++c) {
        images(i, c) = gen.uniform() < sigmoid(logits[c]) ? 1.0 : 0.0;
      }
    }
    return images;
  };
  Eigen::MatrixXd x_train = sample_images(n_train);
  Eigen::MatrixXd x_test = sample_images(n_test);

  PretrainResult out;
  out.train_path = cfg.output_dir + "/train.opvi";
  out.test_path = cfg.output_dir + "/test.opvi";
  out.checkpoint_path = cfg.output_dir + "/model.opvc";
  save_dataset(out.train_path, x_train);
  save_dataset(out.test_path, x_test);

  // Joint MAP ascent on the training split with standard normal priors on
  // W, b, and the per-image latents. The weight prior matters: without it
  // the logits saturate, data gradients vanish, and the fitted model
  // predicts held-out pixels with confident nonsense.
  RngStream init = RngStream::derive(ps.seed, {kPathPretrainInit});
  Eigen::MatrixXd w(k, p);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < p; ++c) w(r, c) = 0.1 * init.normal();
  }
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd z(n_train, k);
  for (int i = 0; i < n_train; ++i) {
    for (int r = 0; r < k; ++r) z(i, r) = 0.1 * init.normal();
  }

  Adam adam_w(k * p, ps.step_size);
  Adam adam_b(p, ps.step_size);
  Adam adam_z(n_train * k, ps.step_size);
  Eigen::VectorXd w_flat = Eigen::Map<Eigen::VectorXd>(w.data(), k * p);
  Eigen::VectorXd z_flat = Eigen::Map<Eigen::VectorXd>(z.data(), n_train * k);

  double loglik = 0.0;
  for (int it = 0; it <= ps.iterations; ++it) {
    Eigen::Map<Eigen::MatrixXd> w_mat(w_flat.data(), k, p);
    Eigen::Map<Eigen::MatrixXd> z_mat(z_flat.data(), n_train, k);
    Eigen::MatrixXd logits =
        (z_mat * w_mat).rowwise() + b.transpose();  // n x p
    Eigen::MatrixXd probs = logits.unaryExpr([](double a) {
      return sigmoid(a);
    });
    loglik = -0.5 * z_flat.squaredNorm();
    for (int i = 0; i < n_train; ++i) {
      for (int c = 0; c < p; ++c) {
        loglik -= softplus(x_train(i, c) == 1.0 ? -logits(i, c)
                                                : logits(i, c));
      }
    }
    loglik -= 0.5 * n_train * k * std::log(2.0 * M_PI);
    if (it == ps.iterations) break;

    Eigen::MatrixXd resid = x_train - probs;  // n x p
    Eigen::MatrixXd grad_w =
        z_mat.transpose() * resid / n_train - w_mat / (6.25 * n_train);
    Eigen::VectorXd grad_b =
        resid.colwise().sum().transpose() / n_train - b / n_train;
    Eigen::MatrixXd grad_z = resid * w_mat.transpose() - z_mat;
    // Adam minimizes; feed negated gradients to ascend.
    Eigen::VectorXd gw = -Eigen::Map<Eigen::VectorXd>(grad_w.data(), k * p);
    Eigen::VectorXd gz =
        -Eigen::Map<Eigen::VectorXd>(grad_z.data(), n_train * k);
    adam_w.step(w_flat, gw);
    adam_b.step(b, -grad_b);
    adam_z.step(z_flat, gz);
  }

  out.weights = Eigen::Map<Eigen::MatrixXd>(w_flat.data(), k, p);
  out.bias = b;
  out.final_train_loglik_per_image = loglik / n_train;

  Checkpoint cp;
  Eigen::VectorXd w_row_major(k * p);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < p; ++c) w_row_major[r * p + c] = out.weights(r, c);
  }
  cp["W"] = w_row_major;
  cp["b"] = b;
  cp["dims"] = Eigen::Vector2d(k, p);
  save_checkpoint(out.checkpoint_path, cp);
  return out;
}

CompletionResult exp_lfa(const ExperimentConfig& cfg) {
  if (cfg.experiment != "lfa") {
    config_fail("exp_lfa needs experiment = \"lfa\"");
  }
  if (cfg.lfa.model_checkpoint.empty() || cfg.lfa.test_data.empty()) {
    config_fail("lfa needs model_checkpoint and test_data paths");
  }
  OperatorObjective objective(cfg.objective);
  LfaModelParams model_params = read_model_checkpoint(cfg.lfa.model_checkpoint);
  const int k = static_cast<int>(model_params.weights.rows());
  const int p = static_cast<int>(model_params.weights.cols());
  Eigen::MatrixXd x_test = load_dataset(cfg.lfa.test_data);
  if (x_test.cols() != p) {
    throw IoError("test data has " + std::to_string(x_test.cols()) +
                  " pixels but the model expects " + std::to_string(p));
  }
  const int n = static_cast<int>(x_test.rows());
  auto family = make_family_cfg(cfg, k);
  if (objective.needs_density() && !family->has_density()) {
    throw IncompatibleError(
        "the KL objective needs a variational density, which programs do "
        "not provide");
  }
  std::unique_ptr<TestFunction> f;
  if (objective.needs_test_function()) f = make_test_function(cfg, k);
  ensure_output_dir(cfg.output_dir);

  CompletionResult res;
  res.mask_seed = cfg.lfa.mask_seed;
  res.per_image_loglik.resize(n);
  res.completion_path = cfg.output_dir + "/completion.csv";
  res.trace_path = cfg.output_dir + "/trace.csv";
  res.checkpoint_path = cfg.output_dir + "/posterior.opvc";

  const int hold = p / 2;
  const int s = cfg.lfa.predictive_samples;
  Sampler sampler(*family);
  ParamSet lam_at(family->param_spec());
  std::vector<int> trace_updates;
  std::vector<double> trace_sums;
  Checkpoint cp;

  for (int i = 0; i < n; ++i) {
    RngStream mask_rng = RngStream::derive(
        cfg.lfa.mask_seed, {kPathMask, static_cast<std::uint64_t>(i)});
    std::vector<int> heldout = mask_rng.sample_without_replacement(p, hold);
    Eigen::VectorXd mask = Eigen::VectorXd::Ones(p);
    for (int pix : heldout) mask[pix] = 0.0;
    LogisticFactorAnalysis model(model_params.weights, model_params.bias,
                                 x_test.row(i), mask);

    const std::uint64_t img_seed =
        RngStream::derive(cfg.train.seed,
                          {kPathImageSeed, static_cast<std::uint64_t>(i)})
            .engine()();
    TrainConfig train = cfg.train;
    train.seed = img_seed;

    // Common evaluation noise across the whole trace of this image, so the
    // improvement curve is not swamped by fresh-sample jitter.
    RngStream eval_rng = RngStream::derive(
        cfg.train.seed, {kPathEvalNoise, static_cast<std::uint64_t>(i)});
    Eigen::MatrixXd eps(s, family->noise_dim());
    for (int r = 0; r < s; ++r) {
      eps.row(r) = eval_rng.normal_vector(family->noise_dim()).transpose();
    }
    auto eval_loglik = [&](const ParamSet& lam) {
      Eigen::MatrixXd draws(s, k);
      for (int r = 0; r < s; ++r) {
        draws.row(r) =
            sampler.draw_with_eps(lam, eps.row(r).transpose()).transpose();
      }
      return posterior_predictive_loglik(model_params.weights,
                                         model_params.bias, draws,
                                         x_test.row(i), heldout);
    };

    RngStream lam_init_rng = RngStream::derive(
        img_seed, {kPathImageLambdaInit});
    ParamSet lam0 = family->init_params(lam_init_rng);
    ParamSet th0;
    if (f != nullptr) {
      RngStream th_init_rng =
          RngStream::derive(img_seed, {kPathImageThetaInit});
      th0 = f->init_params(th_init_rng);
    }

    auto record = [&](std::size_t slot, int updates, double value) {
      if (slot >= trace_updates.size()) {
        trace_updates.push_back(updates);
        trace_sums.push_back(0.0);
      }
      trace_sums[slot] += value;
    };
    std::size_t slot = 0;
    record(slot++, 0, eval_loglik(lam0));

    FitResult fit =
        run_minimax(model, *family, objective, f.get(), train, &lam0,
                    f != nullptr ? &th0 : nullptr);
    for (const auto& row : fit.history) {
      lam_at.set_flat(row.lambda);
      record(slot++, row.iteration + 1, eval_loglik(lam_at));
    }
    res.per_image_loglik[i] = eval_loglik(fit.lambda);
    cp["lambda_" + zero_pad(i)] = fit.lambda.flat();
  }

  res.mean_loglik = res.per_image_loglik.mean();
  res.trace.reserve(trace_updates.size());
  for (std::size_t t = 0; t < trace_updates.size(); ++t) {
    res.trace.emplace_back(trace_updates[t], trace_sums[t] / n);
  }

  std::ofstream completion = open_csv(res.completion_path);
  completion << "image,heldout_loglik,per_pixel_loglik\n";
  for (int i = 0; i < n; ++i) {
    completion << i << ',' << res.per_image_loglik[i] << ','
               << (hold > 0 ? res.per_image_loglik[i] / hold : 0.0) << "\n";
  }
  if (!completion) throw IoError("failed writing " + res.completion_path);

  std::ofstream trace = open_csv(res.trace_path);
  trace << "updates,mean_heldout_loglik\n";
  for (const auto& [updates, value] : res.trace) {
    trace << updates << ',' << value << "\n";
  }
  if (!trace) throw IoError("failed writing " + res.trace_path);

  cp["mask_seed"] =
      Eigen::VectorXd::Constant(1, static_cast<double>(cfg.lfa.mask_seed));
  cp["mean_loglik"] = Eigen::VectorXd::Constant(1, res.mean_loglik);
  cp["per_image_loglik"] = res.per_image_loglik;
  cp["meta_experiment"] = Eigen::VectorXd::Constant(1, 1.0);
  cp["meta_family"] = Eigen::VectorXd::Constant(1, family_code(cfg.family));
  cp["meta_objective"] =
      Eigen::VectorXd::Constant(1, objective_code(cfg.objective));
  cp["meta_latent_dim"] = Eigen::VectorXd::Constant(1, k);
  save_checkpoint(res.checkpoint_path, cp);
  return res;
}

}  // namespace opvi

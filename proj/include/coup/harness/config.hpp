#pragma once

// Experiment configuration. Files are INI with one section per module:
//
//   [experiment] kind seed threads output trials step mode
//   [schedule]   beta_min beta_max
//   [mixture]    weights means variances labels
//   [classifier] kind c epochs learning_rate train_samples
//   [purifier]   lambda t_star noise defense
//   [input]      x y_true y_adv
//   [attack]     norm epsilon step_size iters eot_samples grad_mode random_start eot_fresh_noise
//   [robustness] n_eval
//   [credibility] n delta_x c_quantile repetitions
//   [sweep]      target
//
// Lists are comma separated; mixture means separate components with '|'
// and coordinates with ','. Unknown sections or keys are rejected.

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "coup/attacks.hpp"
#include "coup/harness/experiments.hpp"
#include "coup/harness/results.hpp"

namespace coup::harness {

enum class ClassifierKind { bayes, noisy_sine, logistic };

struct ClassifierConfig {
  ClassifierKind kind = ClassifierKind::noisy_sine;
  int epochs = 200;
  double learning_rate = 0.5;
  std::size_t train_samples = 2000;
};

struct ExperimentConfig {
  std::string kind = "flip-prob";
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string output;
  std::size_t trials = 100000;
  double step = kDefaultStep;
  FlipMode mode = FlipMode::endpoint;

  double beta_min = 0.1;
  double beta_max = 20.0;

  std::vector<MixtureComponent> mixture = GaussianMixture::symmetric_pair(0.5, 1.0).components();
  ClassifierConfig classifier{};

  // Sweepable; single-valued runs use the first entry.
  std::vector<double> lambdas{1.0};
  std::vector<double> cs{0.0};
  std::vector<double> t_stars{0.1};

  bool noise = true;
  DefenseKind defense = DefenseKind::coup;

  std::vector<double> x{0.2};
  int y_true = 1;
  int y_adv = 0;

  AttackSpec attack{};
  bool both_grad_modes = false;
  std::size_t n_eval = 512;

  std::size_t cred_n = 10000;
  double cred_delta_x = 0.05;
  double cred_c_quantile = 1.0;
  std::size_t cred_repetitions = 2000;

  std::string sweep_target = "flip-prob";

  double lambda() const { return lambdas.front(); }
  double c() const { return cs.front(); }
  double t_star() const { return t_stars.front(); }
  Schedule schedule() const { return Schedule(beta_min, beta_max); }

  // Throws ConfigError on any invalid field.
  void validate() const;
  // Stable text form used for the manifest digest.
  std::string canonical() const;
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

std::vector<double> parse_list(const std::string& text);

// Classifier described by the config; logistic models are fitted on a
// training sample drawn from stream (seed, derived).
Classifier build_classifier(const ExperimentConfig& cfg, const GaussianMixture& data);

// Runs cfg.kind (flip-prob, prop1, bound-audit, credibility, robustness,
// purify) for the first entry of every sweep list.
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg);

// Cartesian product over lambdas x cs x t_stars running cfg.sweep_target.
// Every cell uses the master seed (common random numbers), so cell order and
// thread count do not change any row.
std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg);

std::vector<TracePoint> run_trace(const ExperimentConfig& cfg);

}  // namespace coup::harness

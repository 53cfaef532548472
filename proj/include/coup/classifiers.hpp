#pragma once

// Differentiable synthetic classifiers. Each supplies the confidence
// p(y|x), the guidance gradient of log max_y p(y|x) and Hessian-vector
// products of the same log-probability.
//
// Reported probabilities are clamped to [kProbFloor, 1 - kProbFloor] when
// there are at least two classes; gradients of a clamped entry are zero.
// Ties in the argmax resolve to the lowest class index.

#include <variant>
#include <vector>

#include <Eigen/Core>

#include "coup/score_models.hpp"

namespace coup {

inline constexpr double kProbFloor = 1e-12;

struct ConfidenceReport {
  std::vector<double> probs;
  int argmax_label = 0;
  double log_max = 0.0;
};

// Exact posterior of class-conditional mixtures.
class BayesClassifier {
 public:
  BayesClassifier(std::vector<GaussianMixture> class_conditionals, std::vector<double> priors);

  // Groups the components of `data` by label; priors are the label masses.
  static BayesClassifier from_mixture(const GaussianMixture& data);

  int num_classes() const noexcept { return static_cast<int>(priors_.size()); }
  Eigen::Index dim() const noexcept { return marginal_.dim(); }
  const std::vector<GaussianMixture>& class_conditionals() const noexcept { return classes_; }
  const std::vector<double>& priors() const noexcept { return priors_; }

  std::vector<double> raw_probs(const Vec& x) const;
  Vec grad_log_prob(const Vec& x, int label) const;
  Vec hess_log_prob_vp(const Vec& x, int label, const Vec& v) const;

 private:
  std::vector<GaussianMixture> classes_;
  std::vector<double> priors_;
  GaussianMixture marginal_;
};

struct Gaussian1D {
  double mean;
  double variance;
};

// p(y=1|x) = p1(x) / (p0(x) + p1(x) + c n(x)), n(x) = amplitude sin(frequency x).
// One-dimensional only.
class NoisySineClassifier {
 public:
  NoisySineClassifier(Gaussian1D p0, Gaussian1D p1, double noise_level, double frequency = 100.0,
                      double amplitude = 0.01);

  static NoisySineClassifier symmetric(double mu, double variance, double noise_level);

  int num_classes() const noexcept { return 2; }
  Eigen::Index dim() const noexcept { return 1; }
  double noise_level() const noexcept { return c_; }

  // Clamped p(y=1|x).
  double prob_one(double x) const;
  // Value and first two derivatives of log p(label | x), zero under clamping.
  struct LogProbDerivs {
    double value;
    double d1;
    double d2;
  };
  LogProbDerivs log_prob_derivs(double x, int label) const;

 private:
  Gaussian1D p0_;
  Gaussian1D p1_;
  double c_;
  double frequency_;
  double amplitude_;
};

// Multiclass softmax regression: logits = W x + b.
class LogisticClassifier {
 public:
  LogisticClassifier(Eigen::MatrixXd weights, Eigen::VectorXd biases);

  int num_classes() const noexcept { return static_cast<int>(biases_.size()); }
  Eigen::Index dim() const noexcept { return weights_.cols(); }
  const Eigen::MatrixXd& weights() const noexcept { return weights_; }
  const Eigen::VectorXd& biases() const noexcept { return biases_; }

  Eigen::VectorXd raw_probs(const Vec& x) const;
  Vec grad_log_prob(const Vec& x, int label) const;
  Vec hess_log_prob_vp(const Vec& x, const Vec& v) const;

 private:
  Eigen::MatrixXd weights_;  // one row per class
  Eigen::VectorXd biases_;
};

using Classifier = std::variant<BayesClassifier, NoisySineClassifier, LogisticClassifier>;

enum class HessMode { analytic, finite_difference };

int num_classes(const Classifier& model);
Eigen::Index input_dim(const Classifier& model);

ConfidenceReport confidence(const Classifier& model, const Vec& x);

// Gradient of log p(label|x) (clamped probability).
Vec grad_log_conf(const Classifier& model, const Vec& x, int label);
// Gradient of log max_y p(y|x) with the argmax held fixed.
Vec grad_log_max_conf(const Classifier& model, const Vec& x);

// H v for H the Hessian of log p(label|x).
Vec hess_log_conf_vp(const Classifier& model, const Vec& x, int label, const Vec& v,
                     HessMode mode = HessMode::analytic);
Vec hess_log_max_conf_vp(const Classifier& model, const Vec& x, const Vec& v,
                         HessMode mode = HessMode::analytic);

// Central-difference step used by the finite-difference modes.
double fd_step(const Vec& x);

// Index of the largest entry, lowest index on ties.
int argmax_lowest(const std::vector<double>& probs);

struct LogisticFitOptions {
  int epochs = 200;
  double learning_rate = 0.5;
};

struct LogisticFit {
  LogisticClassifier model;
  // Mean training cross-entropy before each epoch, plus the final value.
  std::vector<double> loss_history;
};

// Full-batch gradient descent on mean cross-entropy from zero weights.
LogisticFit fit_logistic(const std::vector<LabeledSample>& data,
                         const LogisticFitOptions& options = {});

double accuracy(const Classifier& model, const std::vector<LabeledSample>& data);

}  // namespace coup

#include "coup/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <fmt/format.h>

#include "coup/errors.hpp"

namespace coup {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool is_clamped(double p) { return p <= kProbFloor || p >= 1.0 - kProbFloor; }

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

void check_input(const Vec& x, Eigen::Index dim) {
  if (x.size() != dim) {
    throw DomainError(fmt::format("input dimension {} does not match classifier dimension {}",
                                  x.size(), dim));
  }
  if (!x.allFinite()) {
    throw DomainError("classifier input must be finite");
  }
}

void check_label(int label, int classes) {
  if (label < 0 || label >= classes) {
    throw DomainError(fmt::format("label {} outside [0, {})", label, classes));
  }
}

GaussianMixture combine(const std::vector<GaussianMixture>& classes,
                        const std::vector<double>& priors) {
  std::vector<MixtureComponent> all;
  for (std::size_t y = 0; y < classes.size(); ++y) {
    for (auto c : classes[y].components()) {
      c.weight *= priors[y];
      c.label = static_cast<int>(y);
      all.push_back(std::move(c));
    }
  }
  // Renormalise away rounding in the products.
  double total = 0.0;
  for (const auto& c : all) total += c.weight;
  for (auto& c : all) c.weight /= total;
  return GaussianMixture(std::move(all));
}

// Softmax with reporting clamp; for two classes the complement is kept exact.
std::vector<double> clamped_report(std::vector<double> p) {
  if (p.size() < 2) {
    return p;
  }
  if (p.size() == 2) {
    p[1] = clamp_prob(p[1]);
    p[0] = 1.0 - p[1];
    return p;
  }
  for (double& v : p) v = clamp_prob(v);
  return p;
}

struct Pdf1D {
  double value;
  double d1;
  double d2;
};

Pdf1D gaussian_pdf(const Gaussian1D& g, double x) {
  const double u = x - g.mean;
  const double p = std::exp(-0.5 * u * u / g.variance) / std::sqrt(2.0 * std::numbers::pi * g.variance);
  return {p, -u / g.variance * p, (u * u / (g.variance * g.variance) - 1.0 / g.variance) * p};
}

}  // namespace

int argmax_lowest(const std::vector<double>& probs) {
  int best = 0;
  for (std::size_t k = 1; k < probs.size(); ++k) {
    if (probs[k] > probs[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(k);
    }
  }
  return best;
}

double fd_step(const Vec& x) { return std::max(1e-5, 1e-7 * x.norm()); }

// ---------------------------------------------------------------- Bayes

BayesClassifier::BayesClassifier(std::vector<GaussianMixture> class_conditionals,
                                 std::vector<double> priors)
    : classes_(std::move(class_conditionals)),
      priors_(std::move(priors)),
      marginal_([&] {
        if (classes_.empty() || classes_.size() != priors_.size()) {
          throw DomainError("Bayes classifier needs one prior per class conditional");
        }
        double total = 0.0;
        for (double p : priors_) {
          if (!(p > 0.0)) throw DomainError("class priors must be positive");
          total += p;
        }
        if (std::abs(total - 1.0) > 1e-12) {
          throw DomainError(fmt::format("class priors sum to {}, expected 1", total));
        }
        for (const auto& c : classes_) {
          if (c.dim() != classes_.front().dim()) {
            throw DomainError("class conditionals must share one dimension");
          }
        }
        return combine(classes_, priors_);
      }()) {}

BayesClassifier BayesClassifier::from_mixture(const GaussianMixture& data) {
  std::map<int, std::vector<MixtureComponent>> grouped;
  for (const auto& c : data.components()) {
    grouped[c.label].push_back(c);
  }
  if (static_cast<int>(grouped.size()) != data.num_labels()) {
    throw DomainError("mixture labels must be contiguous from 0");
  }
  std::vector<GaussianMixture> classes;
  std::vector<double> priors;
  for (auto& [label, comps] : grouped) {
    double mass = 0.0;
    for (const auto& c : comps) mass += c.weight;
    for (auto& c : comps) c.weight /= mass;
    classes.emplace_back(std::move(comps));
    priors.push_back(mass);
  }
  double total = 0.0;
  for (double p : priors) total += p;
  for (double& p : priors) p /= total;
  return BayesClassifier(std::move(classes), std::move(priors));
}

std::vector<double> BayesClassifier::raw_probs(const Vec& x) const {
  std::vector<double> terms(classes_.size());
  for (std::size_t y = 0; y < classes_.size(); ++y) {
    terms[y] = std::log(priors_[y]) + classes_[y].log_density(x);
  }
  const double lse = log_sum_exp(terms);
  for (double& v : terms) v = std::exp(v - lse);
  return terms;
}

Vec BayesClassifier::grad_log_prob(const Vec& x, int label) const {
  return classes_[static_cast<std::size_t>(label)].score(x) - marginal_.score(x);
}

Vec BayesClassifier::hess_log_prob_vp(const Vec& x, int label, const Vec& v) const {
  return classes_[static_cast<std::size_t>(label)].score_jvp(x, v) - marginal_.score_jvp(x, v);
}

// ---------------------------------------------------------------- noisy sine

NoisySineClassifier::NoisySineClassifier(Gaussian1D p0, Gaussian1D p1, double noise_level,
                                         double frequency, double amplitude)
    : p0_(p0), p1_(p1), c_(noise_level), frequency_(frequency), amplitude_(amplitude) {
  if (!(p0.variance > 0.0 && p1.variance > 0.0)) {
    throw DomainError("noisy classifier variances must be positive");
  }
  if (!(noise_level >= 0.0) || !std::isfinite(noise_level)) {
    throw DomainError(fmt::format("noise level must be >= 0, got {}", noise_level));
  }
}

NoisySineClassifier NoisySineClassifier::symmetric(double mu, double variance, double noise_level) {
  return NoisySineClassifier({-mu, variance}, {mu, variance}, noise_level);
}

double NoisySineClassifier::prob_one(double x) const {
  const double p0 = gaussian_pdf(p0_, x).value;
  const double p1 = gaussian_pdf(p1_, x).value;
  const double denom = std::max(p0 + p1 + c_ * amplitude_ * std::sin(frequency_ * x), kProbFloor);
  return clamp_prob(p1 / denom);
}

NoisySineClassifier::LogProbDerivs NoisySineClassifier::log_prob_derivs(double x, int label) const {
  const Pdf1D a = gaussian_pdf(p0_, x);
  const Pdf1D b = gaussian_pdf(p1_, x);
  const double s = std::sin(frequency_ * x);
  const double co = std::cos(frequency_ * x);

  double den = a.value + b.value + c_ * amplitude_ * s;
  double den1 = a.d1 + b.d1 + c_ * amplitude_ * frequency_ * co;
  double den2 = a.d2 + b.d2 - c_ * amplitude_ * frequency_ * frequency_ * s;
  if (den < kProbFloor) {
    den = kProbFloor;
    den1 = 0.0;
    den2 = 0.0;
  }
  const double q = b.value / den;
  const double q_reported = clamp_prob(q);
  const double p_label = label == 1 ? q_reported : 1.0 - q_reported;
  if (is_clamped(q)) {
    return {std::log(p_label), 0.0, 0.0};
  }
  const double cross = b.d1 * den - b.value * den1;
  const double q1 = cross / (den * den);
  const double q2 = (b.d2 * den - b.value * den2) / (den * den) - 2.0 * den1 * cross / (den * den * den);
  if (label == 1) {
    const double r1 = q1 / q;
    return {std::log(p_label), r1, q2 / q - r1 * r1};
  }
  const double r = 1.0 - q;
  const double r1 = q1 / r;
  return {std::log(p_label), -r1, -q2 / r - r1 * r1};
}

// ---------------------------------------------------------------- logistic

LogisticClassifier::LogisticClassifier(Eigen::MatrixXd weights, Eigen::VectorXd biases)
    : weights_(std::move(weights)), biases_(std::move(biases)) {
  if (weights_.rows() != biases_.size() || weights_.rows() < 1 || weights_.cols() < 1) {
    throw DomainError("logistic classifier needs one weight row and bias per class");
  }
}

Eigen::VectorXd LogisticClassifier::raw_probs(const Vec& x) const {
  Eigen::VectorXd logits = weights_ * x + biases_;
  logits.array() -= logits.maxCoeff();
  Eigen::VectorXd p = logits.array().exp();
  return p / p.sum();
}

Vec LogisticClassifier::grad_log_prob(const Vec& x, int label) const {
  const Eigen::VectorXd p = raw_probs(x);
  return weights_.row(label).transpose() - weights_.transpose() * p;
}

Vec LogisticClassifier::hess_log_prob_vp(const Vec& x, const Vec& v) const {
  // -(sum_k p_k w_k w_k^T - wbar wbar^T) v
  const Eigen::VectorXd p = raw_probs(x);
  const Eigen::VectorXd wv = weights_ * v;
  const Vec wbar = weights_.transpose() * p;
  return -(weights_.transpose() * (p.array() * wv.array()).matrix() - wbar * wbar.dot(v));
}

// ---------------------------------------------------------------- dispatch

int num_classes(const Classifier& model) {
  return std::visit([](const auto& m) { return m.num_classes(); }, model);
}

Eigen::Index input_dim(const Classifier& model) {
  return std::visit([](const auto& m) { return m.dim(); }, model);
}

ConfidenceReport confidence(const Classifier& model, const Vec& x) {
  check_input(x, input_dim(model));
  std::vector<double> probs = std::visit(
      overloaded{
          [&](const BayesClassifier& m) { return clamped_report(m.raw_probs(x)); },
          [&](const NoisySineClassifier& m) {
            const double q = m.prob_one(x[0]);
            return std::vector<double>{1.0 - q, q};
          },
          [&](const LogisticClassifier& m) {
            const Eigen::VectorXd p = m.raw_probs(x);
            return clamped_report(std::vector<double>(p.data(), p.data() + p.size()));
          },
      },
      model);
  ConfidenceReport report;
  report.argmax_label = argmax_lowest(probs);
  report.log_max = std::log(probs[static_cast<std::size_t>(report.argmax_label)]);
  report.probs = std::move(probs);
  return report;
}

Vec grad_log_conf(const Classifier& model, const Vec& x, int label) {
  check_input(x, input_dim(model));
  check_label(label, num_classes(model));
  if (num_classes(model) < 2) {
    return Vec::Zero(x.size());
  }
  return std::visit(
      overloaded{
          [&](const BayesClassifier& m) -> Vec {
            const auto p = m.raw_probs(x);
            if (is_clamped(p[static_cast<std::size_t>(label)])) return Vec::Zero(x.size());
            return m.grad_log_prob(x, label);
          },
          [&](const NoisySineClassifier& m) -> Vec {
            return Vec::Constant(1, m.log_prob_derivs(x[0], label).d1);
          },
          [&](const LogisticClassifier& m) -> Vec {
            const Eigen::VectorXd p = m.raw_probs(x);
            if (is_clamped(p[label])) return Vec::Zero(x.size());
            return m.grad_log_prob(x, label);
          },
      },
      model);
}

Vec grad_log_max_conf(const Classifier& model, const Vec& x) {
  return grad_log_conf(model, x, confidence(model, x).argmax_label);
}

Vec hess_log_conf_vp(const Classifier& model, const Vec& x, int label, const Vec& v,
                     HessMode mode) {
  check_input(x, input_dim(model));
  check_label(label, num_classes(model));
  if (v.size() != x.size()) {
    throw DomainError("Hessian direction must match the input dimension");
  }
  if (num_classes(model) < 2 || v.isZero(0.0)) {
    return Vec::Zero(x.size());
  }
  if (mode == HessMode::finite_difference) {
    const double norm = v.norm();
    const Vec u = v / norm;
    const double h = fd_step(x);
    return (grad_log_conf(model, x + h * u, label) - grad_log_conf(model, x - h * u, label)) *
           (norm / (2.0 * h));
  }
  return std::visit(
      overloaded{
          [&](const BayesClassifier& m) -> Vec {
            const auto p = m.raw_probs(x);
            if (is_clamped(p[static_cast<std::size_t>(label)])) return Vec::Zero(x.size());
            return m.hess_log_prob_vp(x, label, v);
          },
          [&](const NoisySineClassifier& m) -> Vec {
            return Vec::Constant(1, m.log_prob_derivs(x[0], label).d2 * v[0]);
          },
          [&](const LogisticClassifier& m) -> Vec {
            const Eigen::VectorXd p = m.raw_probs(x);
            if (is_clamped(p[label])) return Vec::Zero(x.size());
            return m.hess_log_prob_vp(x, v);
          },
      },
      model);
}

Vec hess_log_max_conf_vp(const Classifier& model, const Vec& x, const Vec& v, HessMode mode) {
  return hess_log_conf_vp(model, x, confidence(model, x).argmax_label, v, mode);
}

// ---------------------------------------------------------------- fitting

LogisticFit fit_logistic(const std::vector<LabeledSample>& data,
                         const LogisticFitOptions& options) {
  if (data.empty()) {
    throw FitError("cannot fit a classifier to an empty dataset");
  }
  int classes = 0;
  std::vector<int> seen;
  for (const auto& s : data) {
    if (s.label < 0) throw FitError("labels must be non-negative");
    classes = std::max(classes, s.label + 1);
    if (std::find(seen.begin(), seen.end(), s.label) == seen.end()) seen.push_back(s.label);
  }
  if (seen.size() < 2) {
    throw FitError("logistic fit needs at least two classes in the data");
  }
  if (options.epochs < 0 || !(options.learning_rate > 0.0)) {
    throw FitError("epochs must be >= 0 and the learning rate positive");
  }
  const Eigen::Index d = data.front().x.size();
  const double n = static_cast<double>(data.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(classes, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(classes);

  auto loss_and_grad = [&](Eigen::MatrixXd* gw, Eigen::VectorXd* gb) {
    double loss = 0.0;
    if (gw) gw->setZero(classes, d);
    if (gb) gb->setZero(classes);
    for (const auto& s : data) {
      Eigen::VectorXd logits = w * s.x + b;
      const double m = logits.maxCoeff();
      Eigen::VectorXd p = (logits.array() - m).exp();
      const double z = p.sum();
      p /= z;
      loss -= logits[s.label] - m - std::log(z);
      p[s.label] -= 1.0;
      if (gw) gw->noalias() += p * s.x.transpose();
      if (gb) *gb += p;
    }
    return loss / n;
  };

  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(options.epochs) + 1);
  Eigen::MatrixXd gw;
  Eigen::VectorXd gb;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    history.push_back(loss_and_grad(&gw, &gb));
    w -= options.learning_rate / n * gw;
    b -= options.learning_rate / n * gb;
  }
  history.push_back(loss_and_grad(nullptr, nullptr));
  return {LogisticClassifier(std::move(w), std::move(b)), std::move(history)};
}

double accuracy(const Classifier& model, const std::vector<LabeledSample>& data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : data) {
    if (confidence(model, s.x).argmax_label == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace coup

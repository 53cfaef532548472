#include "coup/score_models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "coup/errors.hpp"

namespace coup {

namespace {

constexpr double kWeightSumTolerance = 1e-12;

}  // namespace

double log_sum_exp(const std::vector<double>& terms) {
  const double m = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(m)) {
    return m;
  }
  double s = 0.0;
  for (double v : terms) {
    s += std::exp(v - m);
  }
  return m + std::log(s);
}

GaussianMixture::GaussianMixture(std::vector<MixtureComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) {
    throw DomainError("mixture needs at least one component");
  }
  const Eigen::Index d = components_.front().mean.size();
  if (d == 0) {
    throw DomainError("mixture components must have dimension >= 1");
  }
  double total = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight > 0.0)) {
      throw DomainError(fmt::format("mixture weight must be positive, got {}", c.weight));
    }
    if (!(c.variance > 0.0) || !std::isfinite(c.variance)) {
      throw DomainError(fmt::format("mixture variance must be positive, got {}", c.variance));
    }
    if (c.mean.size() != d || !c.mean.allFinite()) {
      throw DomainError("mixture means must be finite and share one dimension");
    }
    if (c.label < 0) {
      throw DomainError("component labels must be non-negative");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > kWeightSumTolerance) {
    throw DomainError(fmt::format("mixture weights sum to {}, expected 1", total));
  }
}

GaussianMixture GaussianMixture::symmetric_pair(double mu, double variance) {
  return GaussianMixture({{0.5, Vec::Constant(1, -mu), variance, 0},
                          {0.5, Vec::Constant(1, mu), variance, 1}});
}

int GaussianMixture::num_labels() const noexcept {
  int top = 0;
  for (const auto& c : components_) {
    top = std::max(top, c.label);
  }
  return top + 1;
}

GaussianMixture GaussianMixture::diffuse(double alpha) const {
  if (alpha == 1.0) {
    return *this;
  }
  std::vector<MixtureComponent> out = components_;
  const double root = std::sqrt(alpha);
  for (auto& c : out) {
    c.mean *= root;
    c.variance = alpha * c.variance + (1.0 - alpha);
  }
  return GaussianMixture(std::move(out));
}

void GaussianMixture::check_dim(const Vec& x) const {
  if (x.size() != dim()) {
    throw DomainError(fmt::format("state dimension {} does not match mixture dimension {}",
                                  x.size(), dim()));
  }
}

std::vector<double> GaussianMixture::component_log_terms(const Vec& x) const {
  check_dim(x);
  const double d = static_cast<double>(dim());
  std::vector<double> terms(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const double sq = (x - c.mean).squaredNorm();
    terms[k] = std::log(c.weight) - 0.5 * d * std::log(2.0 * std::numbers::pi * c.variance) -
               0.5 * sq / c.variance;
  }
  return terms;
}

double GaussianMixture::log_density(const Vec& x) const {
  return log_sum_exp(component_log_terms(x));
}

std::vector<double> GaussianMixture::responsibilities(const Vec& x) const {
  std::vector<double> r = component_log_terms(x);
  const double lse = log_sum_exp(r);
  for (double& v : r) {
    v = std::exp(v - lse);
  }
  return r;
}

Vec GaussianMixture::score(const Vec& x) const {
  const std::vector<double> r = responsibilities(x);
  Vec s = Vec::Zero(x.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    s.noalias() -= r[k] / c.variance * (x - c.mean);
  }
  return s;
}

Vec GaussianMixture::score_jvp(const Vec& x, const Vec& v) const {
  // H = sum_k r_k (g_k g_k^T - I / v_k) - s s^T with g_k the component score.
  const std::vector<double> r = responsibilities(x);
  Vec s = Vec::Zero(x.size());
  Vec out = Vec::Zero(x.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const Vec g = -(x - c.mean) / c.variance;
    s.noalias() += r[k] * g;
    out.noalias() += r[k] * (g * g.dot(v) - v / c.variance);
  }
  out.noalias() -= s * s.dot(v);
  return out;
}

double log_density(const GaussianMixture& gmm, const Vec& x, double t, const Schedule& schedule) {
  return gmm.diffuse(schedule.alpha(t)).log_density(x);
}

Vec score_at(const GaussianMixture& gmm, const Vec& x, double t, const Schedule& schedule) {
  return gmm.diffuse(schedule.alpha(t)).score(x);
}

std::vector<double> responsibilities(const GaussianMixture& gmm, const Vec& x, double t,
                                     const Schedule& schedule) {
  return gmm.diffuse(schedule.alpha(t)).responsibilities(x);
}

std::vector<LabeledSample> sample(const GaussianMixture& gmm, std::size_t n,
                                  const NoiseDriver& driver) {
  if (n == 0) {
    throw DomainError("sample count must be at least 1");
  }
  const auto& comps = gmm.components();
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = driver.uniform(i, 0);
    std::size_t k = 0;
    double acc = comps[0].weight;
    while (u > acc && k + 1 < comps.size()) {
      acc += comps[++k].weight;
    }
    const auto& c = comps[k];
    out.push_back({c.mean + std::sqrt(c.variance) * driver.normals(i, gmm.dim()), c.label});
  }
  return out;
}

}  // namespace coup

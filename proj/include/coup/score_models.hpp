#pragma once

// Isotropic Gaussian mixtures with closed-form densities and scores at any
// diffusion time. Under the VP forward kernel a mixture stays a mixture:
// component k becomes N(sqrt(alpha_t) mu_k, (alpha_t sigma_k^2 + 1 - alpha_t) I).

#include <cstddef>
#include <vector>

#include "coup/sde_core.hpp"

namespace coup {

struct MixtureComponent {
  double weight;
  Vec mean;
  double variance;
  // Ground-truth class of samples drawn from this component.
  int label = 0;
};

class GaussianMixture {
 public:
  explicit GaussianMixture(std::vector<MixtureComponent> components);

  // Toy data: 0.5 N(-mu, sigma^2) + 0.5 N(mu, sigma^2) labelled 0 / 1.
  static GaussianMixture symmetric_pair(double mu, double variance);

  const std::vector<MixtureComponent>& components() const noexcept { return components_; }
  std::size_t size() const noexcept { return components_.size(); }
  Eigen::Index dim() const noexcept { return components_.front().mean.size(); }
  int num_labels() const noexcept;

  // Mixture of the data pushed through the forward kernel with scale alpha.
  GaussianMixture diffuse(double alpha) const;

  double log_density(const Vec& x) const;
  Vec score(const Vec& x) const;
  std::vector<double> responsibilities(const Vec& x) const;
  // Hessian of log density applied to v (the Jacobian of score()).
  Vec score_jvp(const Vec& x, const Vec& v) const;

 private:
  // log w_k + log N(x; m_k, v_k I) for every component.
  std::vector<double> component_log_terms(const Vec& x) const;
  void check_dim(const Vec& x) const;

  std::vector<MixtureComponent> components_;
};

double log_density(const GaussianMixture& gmm, const Vec& x, double t, const Schedule& schedule);
Vec score_at(const GaussianMixture& gmm, const Vec& x, double t, const Schedule& schedule);
std::vector<double> responsibilities(const GaussianMixture& gmm, const Vec& x, double t,
                                     const Schedule& schedule);

struct LabeledSample {
  Vec x;
  int label;
};

// i.i.d. draws; sample i uses step i of `driver`.
std::vector<LabeledSample> sample(const GaussianMixture& gmm, std::size_t n,
                                  const NoiseDriver& driver);

// log sum exp with max shift.
double log_sum_exp(const std::vector<double>& terms);

}  // namespace coup

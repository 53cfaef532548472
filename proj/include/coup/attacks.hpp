#pragma once

// Desk-scale gradient attacks on the purify-then-classify pipeline.

#include <cstdint>
#include <vector>

#include "coup/gradients.hpp"
#include "coup/purifier.hpp"

namespace coup {

enum class Norm { linf, l2 };
enum class GradMode { adjoint, bpda };
enum class DefenseKind { none, reverse_only, coup, diffpure };

struct AttackSpec {
  Norm norm = Norm::linf;
  double epsilon = 0.0;
  double step_size = 0.1;
  int iters = 10;
  int eot_samples = 1;
  GradMode grad_mode = GradMode::adjoint;
  bool random_start = false;
  // When false every EOT sample reuses the same streams at each iteration.
  bool eot_fresh_noise = true;

  void validate() const;
};

// Defense followed by the classifier. Stochastic defenses draw their noise
// from the driver passed to each call.
struct Pipeline {
  DefenseKind defense = DefenseKind::none;
  const GaussianMixture* prior = nullptr;
  const Classifier* classifier = nullptr;
  Schedule schedule{};
  GuidanceSpec guidance{};
  double t_star = 0.1;
  double step = kDefaultStep;
  bool noise_enabled = true;

  bool stochastic() const noexcept;
  void validate() const;

  PurifyResult purify(const Vec& x, const NoiseDriver& driver, bool record) const;
  int predict(const Vec& x, const NoiseDriver& driver) const;
  // Cross-entropy on clamped probabilities after the defense.
  double loss(const Vec& x, int y_true, const NoiseDriver& driver) const;
  // Pathwise gradient of loss() for one noise realisation.
  Vec loss_grad(const Vec& x, int y_true, const NoiseDriver& driver, GradMode mode) const;

 private:
  GuidedModel reverse_model() const;
  PurifySpec spec_for(const NoiseDriver& driver, bool record) const;
};

struct AdvResult {
  Vec x_adv;
  bool success = false;
  std::vector<double> loss_history;
};

Vec project(const Vec& x, const Vec& x0, const AttackSpec& spec);

// Cross-entropy gradient of the classifier at the purified point, passed
// back as if the purifier were the identity.
Vec bpda_grad(const Classifier& classifier, const Vec& x_purified, int y_true);

// Mean pathwise gradient over spec.eot_samples noise streams derived from
// `driver` and `iteration`.
Vec eot_grad(const Pipeline& pipeline, const Vec& x, int y_true, const AttackSpec& spec,
             const NoiseDriver& driver, std::uint64_t iteration = 0);

// Mean loss over the same streams eot_grad uses.
double eot_loss(const Pipeline& pipeline, const Vec& x, int y_true, const AttackSpec& spec,
                const NoiseDriver& driver, std::uint64_t iteration = 0);

// Projected gradient ascent on cross-entropy with best-iterate selection.
// Success is judged with `eval_driver` for stochastic pipelines.
AdvResult pgd(const Pipeline& pipeline, const Vec& x, int y_true, const AttackSpec& spec,
              const NoiseDriver& driver, const NoiseDriver& eval_driver);

}  // namespace coup

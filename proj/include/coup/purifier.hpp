#pragma once

// Classifier-confidence guided reverse-time VP-SDE purification, the
// guidance-free ablation and the forward+reverse baseline.
//
// Guided drift:  f(x,t) = -1/2 beta(t) x - beta(t) [score(x,t) + lambda grad log max_y p(y|x)]
// integrated from t_star down to 0 with diffusion sqrt(beta(t)).

#include <cstdint>
#include <optional>
#include <vector>

#include "coup/classifiers.hpp"
#include "coup/score_models.hpp"
#include "coup/sde_core.hpp"

namespace coup {

struct GuidanceSpec {
  double lambda = 1.0;
};

// Everything that defines the guided drift. A null prior drops the score
// term; a null classifier drops the guidance term.
struct GuidedModel {
  const GaussianMixture* prior = nullptr;
  const Classifier* classifier = nullptr;
  Schedule schedule{};
  GuidanceSpec guidance{};

  double effective_lambda() const noexcept { return classifier ? guidance.lambda : 0.0; }
  void validate() const;
};

struct PurifySpec {
  double t_star = 0.1;
  double step = kDefaultStep;
  bool noise_enabled = true;
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;
  bool record_trajectory = false;
  bool record_increments = false;
  bool record_confidence = false;

  NoiseDriver driver() const noexcept { return {master_seed, stream_id}; }
};

struct ConfidencePoint {
  double time;
  std::vector<double> probs;
};

struct PurifyResult {
  Vec x_out;
  std::optional<Trajectory> trajectory;
  std::optional<std::vector<ConfidencePoint>> confidence_trace;
};

Vec guided_drift(const GuidedModel& model, const Vec& x, double t);

PurifyResult coup_purify(const Vec& x_adv, const GuidedModel& model, const PurifySpec& spec);

// coup_purify with guidance removed.
PurifyResult reverse_purify(const Vec& x_adv, const GaussianMixture& prior,
                            const Schedule& schedule, const PurifySpec& spec);

// Exact forward kernel to t_star, then reverse_purify. The forward draw uses
// a stream derived from the spec's stream so the reverse leg is unaffected.
PurifyResult diffpure_purify(const Vec& x, const GaussianMixture& prior, const Schedule& schedule,
                             const PurifySpec& spec);

NoiseDriver diffpure_forward_driver(const PurifySpec& spec);

struct TrackedLabels {
  int y_true;
  int y_adv;
};

struct TracePoint {
  double time;
  Vec x;
  double p_true;
  double p_adv;
};

// Noise-free solve recording p(y_true|x_t) and p(y_adv|x_t) under `observer`
// at every grid point.
std::vector<TracePoint> confidence_trace(const Vec& x_adv, TrackedLabels labels,
                                         const GuidedModel& model, const Classifier& observer,
                                         PurifySpec spec);

}  // namespace coup

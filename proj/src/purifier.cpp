#include "coup/purifier.hpp"

#include <cmath>

#include <fmt/format.h>

#include "coup/errors.hpp"

namespace coup {

void GuidedModel::validate() const {
  if (!(guidance.lambda >= 0.0) || !std::isfinite(guidance.lambda)) {
    throw DomainError(fmt::format("guidance weight must be >= 0, got {}", guidance.lambda));
  }
  if (prior && classifier && prior->dim() != input_dim(*classifier)) {
    throw DomainError("prior and classifier dimensions differ");
  }
}

Vec guided_drift(const GuidedModel& model, const Vec& x, double t) {
  const double beta = model.schedule.beta(t);
  Vec force = Vec::Zero(x.size());
  if (model.prior) {
    force += model.prior->diffuse(model.schedule.alpha(t)).score(x);
  }
  const double lambda = model.effective_lambda();
  if (lambda != 0.0) {
    force += lambda * grad_log_max_conf(*model.classifier, x);
  }
  return -0.5 * beta * x - beta * force;
}

PurifyResult coup_purify(const Vec& x_adv, const GuidedModel& model, const PurifySpec& spec) {
  model.validate();
  if (model.prior && model.prior->dim() != x_adv.size()) {
    throw DomainError("input dimension does not match the prior");
  }
  const TimeGrid grid(spec.t_star, 0.0, spec.step);
  const Schedule& schedule = model.schedule;

  std::vector<ConfidencePoint> trace;
  EulerOptions opts;
  opts.noise_enabled = spec.noise_enabled;
  opts.record_path = spec.record_trajectory || spec.record_increments;
  opts.record_increments = spec.record_increments;
  if (spec.record_confidence) {
    if (!model.classifier) {
      throw DomainError("confidence recording needs a classifier");
    }
    trace.push_back({spec.t_star, confidence(*model.classifier, x_adv).probs});
    opts.observer = [&](std::size_t, double t, const Vec& x) {
      trace.push_back({t, confidence(*model.classifier, x).probs});
    };
  }

  Trajectory path = euler_maruyama(
      [&](const Vec& x, double t) { return guided_drift(model, x, t); },
      [&](double t) { return std::sqrt(schedule.beta(t)); }, x_adv, grid, spec.driver(), opts);

  PurifyResult result{path.back(), std::nullopt, std::nullopt};
  if (spec.record_trajectory || spec.record_increments) {
    result.trajectory = std::move(path);
  }
  if (spec.record_confidence) {
    result.confidence_trace = std::move(trace);
  }
  return result;
}

PurifyResult reverse_purify(const Vec& x_adv, const GaussianMixture& prior,
                            const Schedule& schedule, const PurifySpec& spec) {
  const GuidedModel model{&prior, nullptr, schedule, {0.0}};
  return coup_purify(x_adv, model, spec);
}

NoiseDriver diffpure_forward_driver(const PurifySpec& spec) {
  return spec.driver().derive(0xF0F0'D1FF'0000'0001ull);
}

PurifyResult diffpure_purify(const Vec& x, const GaussianMixture& prior, const Schedule& schedule,
                             const PurifySpec& spec) {
  Vec start = x;
  if (spec.noise_enabled) {
    start = forward_perturb(x, spec.t_star, schedule, diffpure_forward_driver(spec));
  } else {
    start = std::sqrt(schedule.alpha(spec.t_star)) * x;
  }
  return reverse_purify(start, prior, schedule, spec);
}

std::vector<TracePoint> confidence_trace(const Vec& x_adv, TrackedLabels labels,
                                         const GuidedModel& model, const Classifier& observer,
                                         PurifySpec spec) {
  const int classes = num_classes(observer);
  if (labels.y_true < 0 || labels.y_true >= classes || labels.y_adv < 0 ||
      labels.y_adv >= classes) {
    throw DomainError("tracked labels must be valid class indices");
  }
  spec.noise_enabled = false;
  spec.record_trajectory = true;
  spec.record_confidence = false;
  const PurifyResult r = coup_purify(x_adv, model, spec);
  const Trajectory& path = *r.trajectory;
  std::vector<TracePoint> out;
  out.reserve(path.size());
  for (std::size_t k = 0; k < path.size(); ++k) {
    const auto probs = confidence(observer, path.states[k]).probs;
    out.push_back({path.times[k], path.states[k], probs[static_cast<std::size_t>(labels.y_true)],
                   probs[static_cast<std::size_t>(labels.y_adv)]});
  }
  return out;
}

}  // namespace coup

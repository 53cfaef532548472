#include "coup/attacks.hpp"

#include <cmath>

#include <fmt/format.h>

#include "coup/errors.hpp"

namespace coup {

namespace {

constexpr std::uint64_t kRandomStartTag = 0x5EED'0000'0000'0001ull;

NoiseDriver eot_driver(const NoiseDriver& base, const AttackSpec& spec, std::uint64_t iteration,
                       int sample) {
  const std::uint64_t it = spec.eot_fresh_noise ? iteration : 0;
  return base.derive(it).derive(static_cast<std::uint64_t>(sample));
}

}  // namespace

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw DomainError(fmt::format("epsilon must be >= 0, got {}", epsilon));
  }
  if (iters < 0) throw DomainError("iteration count must be >= 0");
  if (iters > 0 && !(step_size > 0.0)) throw DomainError("step size must be positive");
  if (eot_samples < 1) throw DomainError("EOT sample count must be >= 1");
}

bool Pipeline::stochastic() const noexcept {
  return defense != DefenseKind::none && noise_enabled && t_star > 0.0;
}

void Pipeline::validate() const {
  if (!classifier) throw DomainError("pipeline needs a classifier");
  if (defense != DefenseKind::none && !prior) throw DomainError("defense needs a prior");
  if (!(t_star >= 0.0 && t_star <= 1.0)) throw DomainError("t_star outside [0, 1]");
}

GuidedModel Pipeline::reverse_model() const {
  switch (defense) {
    case DefenseKind::coup:
      return {prior, classifier, schedule, guidance};
    default:
      return {prior, nullptr, schedule, {0.0}};
  }
}

PurifySpec Pipeline::spec_for(const NoiseDriver& driver, bool record) const {
  PurifySpec spec;
  spec.t_star = t_star;
  spec.step = step;
  spec.noise_enabled = noise_enabled;
  spec.master_seed = driver.master_seed();
  spec.stream_id = driver.stream_id();
  spec.record_increments = record;
  spec.record_trajectory = record;
  return spec;
}

PurifyResult Pipeline::purify(const Vec& x, const NoiseDriver& driver, bool record) const {
  switch (defense) {
    case DefenseKind::none:
      return {x, std::nullopt, std::nullopt};
    case DefenseKind::diffpure:
      return diffpure_purify(x, *prior, schedule, spec_for(driver, record));
    default:
      return coup_purify(x, reverse_model(), spec_for(driver, record));
  }
}

int Pipeline::predict(const Vec& x, const NoiseDriver& driver) const {
  return confidence(*classifier, purify(x, driver, false).x_out).argmax_label;
}

double Pipeline::loss(const Vec& x, int y_true, const NoiseDriver& driver) const {
  const auto report = confidence(*classifier, purify(x, driver, false).x_out);
  return -std::log(report.probs.at(static_cast<std::size_t>(y_true)));
}

Vec Pipeline::loss_grad(const Vec& x, int y_true, const NoiseDriver& driver, GradMode mode) const {
  if (mode == GradMode::bpda || defense == DefenseKind::none) {
    return bpda_grad(*classifier, purify(x, driver, false).x_out, y_true);
  }
  if (defense == DefenseKind::diffpure) {
    // Forward leg is x -> sqrt(alpha) x + noise; the reverse leg starts there.
    const PurifySpec spec = spec_for(driver, true);
    const Vec start = noise_enabled
                          ? forward_perturb(x, t_star, schedule, diffpure_forward_driver(spec))
                          : Vec(std::sqrt(schedule.alpha(t_star)) * x);
    const GuidedModel model = reverse_model();
    const PurifyResult r = coup_purify(start, model, spec);
    const Vec g_out = bpda_grad(*classifier, r.x_out, y_true);
    return std::sqrt(schedule.alpha(t_star)) * augmented_solve(r.x_out, g_out, *r.trajectory, model).grad;
  }
  const GuidedModel model = reverse_model();
  const PurifyResult r = coup_purify(x, model, spec_for(driver, true));
  const Vec g_out = bpda_grad(*classifier, r.x_out, y_true);
  return augmented_solve(r.x_out, g_out, *r.trajectory, model).grad;
}

Vec project(const Vec& x, const Vec& x0, const AttackSpec& spec) {
  if (x.size() != x0.size()) throw DomainError("projection dimension mismatch");
  const Vec delta = x - x0;
  if (spec.norm == Norm::linf) {
    return x0 + delta.cwiseMax(-spec.epsilon).cwiseMin(spec.epsilon);
  }
  const double n = delta.norm();
  if (n <= spec.epsilon) return x;
  if (spec.epsilon == 0.0) return x0;
  return x0 + delta * (spec.epsilon / n);
}

Vec bpda_grad(const Classifier& classifier, const Vec& x_purified, int y_true) {
  return -grad_log_conf(classifier, x_purified, y_true);
}

Vec eot_grad(const Pipeline& pipeline, const Vec& x, int y_true, const AttackSpec& spec,
             const NoiseDriver& driver, std::uint64_t iteration) {
  spec.validate();
  const int samples = pipeline.stochastic() ? spec.eot_samples : 1;
  Vec sum = Vec::Zero(x.size());
  for (int s = 0; s < samples; ++s) {
    sum += pipeline.loss_grad(x, y_true, eot_driver(driver, spec, iteration, s), spec.grad_mode);
  }
  return samples == 1 ? sum : Vec(sum / samples);
}

double eot_loss(const Pipeline& pipeline, const Vec& x, int y_true, const AttackSpec& spec,
                const NoiseDriver& driver, std::uint64_t iteration) {
  const int samples = pipeline.stochastic() ? spec.eot_samples : 1;
  double sum = 0.0;
  for (int s = 0; s < samples; ++s) {
    sum += pipeline.loss(x, y_true, eot_driver(driver, spec, iteration, s));
  }
  return sum / samples;
}

AdvResult pgd(const Pipeline& pipeline, const Vec& x, int y_true, const AttackSpec& spec,
              const NoiseDriver& driver, const NoiseDriver& eval_driver) {
  spec.validate();
  pipeline.validate();
  AdvResult result;
  Vec current = x;
  if (spec.random_start && spec.epsilon > 0.0 && spec.iters > 0) {
    const NoiseDriver start = driver.derive(kRandomStartTag);
    Vec delta(x.size());
    if (spec.norm == Norm::linf) {
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        delta[i] = spec.epsilon * (2.0 * start.uniform(0, static_cast<std::uint32_t>(i)) - 1.0);
      }
    } else {
      delta = start.normals(0, x.size());
      const double radius =
          spec.epsilon * std::pow(start.uniform(1, 0), 1.0 / static_cast<double>(x.size()));
      delta *= radius / delta.norm();
    }
    current = project(x + delta, x, spec);
  }

  Vec best = current;
  double best_loss = eot_loss(pipeline, current, y_true, spec, driver, 0);
  result.loss_history.push_back(best_loss);
  if (spec.epsilon > 0.0) {
    for (int it = 0; it < spec.iters; ++it) {
      const auto iter = static_cast<std::uint64_t>(it);
      const Vec g = eot_grad(pipeline, current, y_true, spec, driver, iter);
      Vec dir;
      if (spec.norm == Norm::linf) {
        dir = g.unaryExpr([](double v) { return double((v > 0.0) - (v < 0.0)); });
      } else {
        const double n = g.norm();
        dir = n > 0.0 ? Vec(g / n) : Vec::Zero(g.size());
      }
      current = project(current + spec.step_size * dir, x, spec);
      const double l = eot_loss(pipeline, current, y_true, spec, driver, iter + 1);
      result.loss_history.push_back(l);
      if (l > best_loss) {
        best_loss = l;
        best = current;
      }
    }
  }
  result.x_adv = std::move(best);
  result.success = pipeline.predict(result.x_adv, eval_driver) != y_true;
  return result;
}

}  // namespace coup

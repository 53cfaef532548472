#include "coup/harness/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "coup/errors.hpp"
#include "coup/harness/parallel.hpp"

namespace coup::harness {

namespace {

constexpr std::uint64_t kEvalDataTag = 0xDA7A'0000'0000'0001ull;
constexpr std::uint64_t kEvalNoiseTag = 0xDA7A'0000'0000'0002ull;
constexpr std::uint64_t kAttackTag = 0xDA7A'0000'0000'0003ull;
constexpr std::uint64_t kBpdaTag = 0xDA7A'0000'0000'0004ull;

std::size_t count(const std::vector<std::uint8_t>& flags) {
  std::size_t n = 0;
  for (auto f : flags) n += f;
  return n;
}

}  // namespace

Estimate proportion_estimate(std::size_t successes, std::size_t trials) {
  if (trials == 0) throw DomainError("proportion needs at least one trial");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  return {p, kZ95 * std::sqrt(p * (1.0 - p) / n), trials};
}

TwoProportionTest two_proportion_test(std::size_t successes_a, std::size_t trials_a,
                                      std::size_t successes_b, std::size_t trials_b) {
  const double na = static_cast<double>(trials_a);
  const double nb = static_cast<double>(trials_b);
  const double pa = static_cast<double>(successes_a) / na;
  const double pb = static_cast<double>(successes_b) / nb;
  const double pooled = static_cast<double>(successes_a + successes_b) / (na + nb);
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb));
  if (!(se > 0.0)) return {0.0, 1.0};
  const double z = (pa - pb) / se;
  return {z, std::erfc(std::abs(z) / std::numbers::sqrt2)};
}

// ------------------------------------------------------------ flip probability

std::vector<std::uint8_t> flip_indicators(const FlipSetup& setup) {
  if (setup.trials < 1) throw DomainError("flip probability needs at least one trial");
  const GaussianMixture prior = GaussianMixture::symmetric_pair(setup.mu, setup.variance);
  const Classifier classifier = NoisySineClassifier::symmetric(setup.mu, setup.variance, setup.c);
  const GuidedModel model{&prior, &classifier, setup.schedule, {setup.lambda}};
  model.validate();
  const TimeGrid grid(setup.t_star, 0.0, setup.step);
  const Vec x0 = Vec::Constant(1, setup.x0);
  const bool first_passage = setup.mode == FlipMode::first_passage;

  std::vector<std::uint8_t> flipped(setup.trials, 0);
  parallel_for(setup.trials, setup.threads, [&](std::size_t i) {
    bool crossed = first_passage && setup.x0 < 0.0;
    EulerOptions opts;
    opts.noise_enabled = setup.noise_enabled;
    opts.record_path = false;
    if (first_passage) {
      opts.observer = [&](std::size_t, double, const Vec& x) { crossed = crossed || x[0] < 0.0; };
    }
    const Trajectory path = euler_maruyama(
        [&](const Vec& x, double t) { return guided_drift(model, x, t); },
        [&](double t) { return std::sqrt(setup.schedule.beta(t)); }, x0, grid,
        NoiseDriver(setup.seed, i), opts);
    flipped[i] = first_passage ? crossed : (path.back()[0] < 0.0);
  });
  return flipped;
}

Estimate flip_probability(const FlipSetup& setup) {
  const auto flags = flip_indicators(setup);
  return proportion_estimate(count(flags), flags.size());
}

// ------------------------------------------------------------ proposition 1

Prop1Report prop1_audit(const Prop1Setup& setup) {
  if (!(setup.var0 > 0.0) || setup.var0 != setup.var1 || setup.mean0 != -setup.mean1 ||
      !(setup.mean1 > 0.0)) {
    throw DomainError(
        "proposition audit needs mirror-image classes N(-mu, s^2), N(mu, s^2) with mu > 0");
  }
  if (!(setup.x0 > 0.0)) throw DomainError("proposition audit needs x0 > 0");
  if (setup.lambdas.empty()) throw DomainError("proposition audit needs at least one lambda");

  FlipSetup flip;
  flip.x0 = setup.x0;
  flip.c = setup.c;
  flip.t_star = setup.t_star;
  flip.step = setup.step;
  flip.trials = setup.trials;
  flip.mode = FlipMode::first_passage;
  flip.seed = setup.seed;
  flip.mu = setup.mean1;
  flip.variance = setup.var1;
  flip.schedule = setup.schedule;
  flip.noise_enabled = setup.noise_enabled;
  flip.threads = setup.threads;

  Prop1Report report;
  report.lambdas = setup.lambdas;
  std::vector<std::vector<std::uint8_t>> flags;
  for (double lambda : setup.lambdas) {
    flip.lambda = lambda;
    flags.push_back(flip_indicators(flip));
    report.probabilities.push_back(proportion_estimate(count(flags.back()), setup.trials));
  }
  const bool need_comparisons =
      std::any_of(setup.lambdas.begin(), setup.lambdas.end(), [](double l) { return l > 0.0; });
  if (!need_comparisons) return report;

  std::vector<std::uint8_t> base;
  const auto zero = std::find(setup.lambdas.begin(), setup.lambdas.end(), 0.0);
  if (zero != setup.lambdas.end()) {
    base = flags[static_cast<std::size_t>(zero - setup.lambdas.begin())];
  } else {
    flip.lambda = 0.0;
    base = flip_indicators(flip);
  }
  const std::size_t base_count = count(base);
  for (std::size_t j = 0; j < setup.lambdas.size(); ++j) {
    if (!(setup.lambdas[j] > 0.0)) continue;
    std::size_t violations = 0;
    for (std::size_t i = 0; i < base.size(); ++i) {
      violations += flags[j][i] > base[i];
    }
    const std::size_t k = count(flags[j]);
    report.comparisons.push_back({setup.lambdas[j],
                                  two_proportion_test(k, setup.trials, base_count, setup.trials),
                                  k < base_count, violations});
  }
  return report;
}

// ------------------------------------------------------------ proposition 2

BoundCheck check_bound(const Trajectory& path, const GuidedModel& model, double t_star) {
  const Schedule& schedule = model.schedule;
  const std::size_t n = path.states.size() - 1;
  if (n > 0 && (!path.increments || path.increments->size() != n)) {
    throw ReplayError("bound audit needs recorded increments");
  }
  BoundCheck out{};
  double max_score = 0.0;
  double max_guidance = 0.0;
  double max_x = 0.0;
  const double lambda = model.effective_lambda();
  for (std::size_t k = 0; k <= n; ++k) {
    const Vec& x = path.states[k];
    const double t = path.times[k];
    if (model.prior) {
      max_score = std::max(max_score, model.prior->diffuse(schedule.alpha(t)).score(x).norm());
    }
    if (lambda != 0.0) {
      max_guidance = std::max(max_guidance, lambda * grad_log_max_conf(*model.classifier, x).norm());
    }
    max_x = std::max(max_x, x.norm());
  }
  // Companion linear SDE driven by the same increments, started at 0: its
  // endpoint is the propagated noise sqrt(e^{2 gamma} - 1) eps.
  Vec noise = Vec::Zero(path.states.front().size());
  for (std::size_t k = 0; k < n; ++k) {
    const double dt = path.times[k + 1] - path.times[k];
    noise += -0.5 * schedule.beta(path.times[k]) * noise * dt + (*path.increments)[k];
  }
  const double g = schedule.gamma(t_star);
  out.constants = {2.0 * max_score, 2.0 * max_guidance, max_x};
  out.noise_norm = noise.norm();
  out.distance = (path.back() - path.states.front()).norm();
  out.bound = g * (out.constants.c_s + out.constants.c_p) + std::expm1(g) * out.constants.c_x +
              out.noise_norm;
  return out;
}

BoundAuditReport bound_audit(const BoundAuditSetup& setup) {
  const GuidedModel model{setup.prior, setup.classifier, setup.schedule, {setup.lambda}};
  model.validate();
  const double tolerance = 1.0 + 10.0 * setup.step;
  std::vector<BoundCheck> checks(setup.trials);
  parallel_for(setup.trials, setup.threads, [&](std::size_t i) {
    PurifySpec spec;
    spec.t_star = setup.t_star;
    spec.step = setup.step;
    spec.noise_enabled = setup.noise_enabled;
    spec.master_seed = setup.seed;
    spec.stream_id = i;
    spec.record_increments = true;
    const PurifyResult r = coup_purify(setup.x, model, spec);
    checks[i] = check_bound(*r.trajectory, model, setup.t_star);
  });
  BoundAuditReport report;
  report.trials = setup.trials;
  for (const auto& c : checks) {
    const double ratio = c.bound > 0.0 ? c.distance / c.bound : (c.distance > 0.0 ? INFINITY : 0.0);
    report.max_ratio = std::max(report.max_ratio, ratio);
    if (c.distance > c.bound * tolerance) ++report.violations;
    report.constants.c_s = std::max(report.constants.c_s, c.constants.c_s);
    report.constants.c_p = std::max(report.constants.c_p, c.constants.c_p);
    report.constants.c_x = std::max(report.constants.c_x, c.constants.c_x);
  }
  return report;
}

// ------------------------------------------------------------ credibility band

double credibility_band(double n, double p_x, double delta_x, double c_quantile) {
  if (!(n >= 1.0)) throw DomainError("credibility band needs n >= 1");
  const double mass = p_x * delta_x;
  if (!(mass > 0.0 && mass < 1.0)) {
    throw DomainError(fmt::format("credibility band needs 0 < p(x) dx < 1, got {}", mass));
  }
  return 0.5 * c_quantile * std::sqrt((1.0 / n) * (1.0 / mass - 1.0));
}

CredibilityReport credibility_empirical(const CredibilitySetup& setup) {
  if (setup.n < 2 || setup.repetitions < 2) {
    throw DomainError("credibility study needs n >= 2 and at least two repetitions");
  }
  const GaussianMixture mixture = GaussianMixture::symmetric_pair(setup.mu, setup.variance);
  CredibilityReport report;
  report.p_x = std::exp(mixture.log_density(Vec::Constant(1, setup.x)));
  report.formula_half_width =
      credibility_band(static_cast<double>(setup.n), report.p_x, setup.delta_x, 1.0);

  const std::size_t per_class = setup.n / 2;
  const double sd = std::sqrt(setup.variance);
  const double lo = setup.x - 0.5 * setup.delta_x;
  const double hi = setup.x + 0.5 * setup.delta_x;
  // NaN marks a repetition with an empty window.
  std::vector<double> estimates(setup.repetitions);
  parallel_for(setup.repetitions, setup.threads, [&](std::size_t r) {
    const NoiseDriver driver(setup.seed, r);
    std::size_t in_window[2] = {0, 0};
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
      const int label = i < per_class ? 0 : 1;
      const double mean = label == 0 ? -setup.mu : setup.mu;
      const double v = mean + sd * driver.normal(i / 2, static_cast<std::uint32_t>(i % 2));
      if (v > lo && v < hi) ++in_window[label];
    }
    const std::size_t total = in_window[0] + in_window[1];
    estimates[r] = total == 0 ? std::nan("")
                              : static_cast<double>(in_window[1]) / static_cast<double>(total);
  });
  double sum = 0.0;
  std::size_t used = 0;
  for (double e : estimates) {
    if (std::isnan(e)) {
      ++report.empty_windows;
      continue;
    }
    sum += e;
    ++used;
  }
  const double mean = sum / static_cast<double>(used);
  double ss = 0.0;
  for (double e : estimates) {
    if (!std::isnan(e)) ss += (e - mean) * (e - mean);
  }
  report.repetitions = used;
  report.observed_sd = std::sqrt(ss / static_cast<double>(used - 1));
  report.observed_sd_ci = kZ95 * report.observed_sd / std::sqrt(2.0 * static_cast<double>(used - 1));
  report.relative_error =
      std::abs(report.observed_sd - report.formula_half_width) / report.formula_half_width;
  return report;
}

// ------------------------------------------------------------ robustness

Pipeline make_pipeline(const RobustnessSetup& setup) {
  Pipeline p;
  p.defense = setup.defense;
  p.prior = setup.data;
  p.classifier = setup.classifier;
  p.schedule = setup.schedule;
  p.guidance = {setup.lambda};
  p.t_star = setup.t_star;
  p.step = setup.step;
  p.noise_enabled = setup.noise_enabled;
  p.validate();
  return p;
}

RobustnessReport robustness_eval(const RobustnessSetup& setup) {
  if (setup.n_eval < 1) throw DomainError("robustness evaluation needs n_eval >= 1");
  if (!setup.data) throw DomainError("robustness evaluation needs a data mixture");
  const Pipeline pipeline = make_pipeline(setup);
  const NoiseDriver root(setup.seed, 0);
  const auto data = sample(*setup.data, setup.n_eval, root.derive(kEvalDataTag));

  RobustnessReport report;
  report.clean_correct.assign(setup.n_eval, 0);
  report.robust_correct.assign(setup.n_eval, 0);
  parallel_for(setup.n_eval, setup.threads, [&](std::size_t i) {
    const auto& ex = data[i];
    const NoiseDriver eval = root.derive(kEvalNoiseTag).derive(i);
    const bool clean = pipeline.predict(ex.x, eval) == ex.label;
    report.clean_correct[i] = clean;

    AttackSpec attack = setup.attack;
    const AdvResult adv = pgd(pipeline, ex.x, ex.label, attack, root.derive(kAttackTag).derive(i), eval);
    bool robust = !adv.success;
    if (robust && setup.both_grad_modes) {
      attack.grad_mode = attack.grad_mode == GradMode::adjoint ? GradMode::bpda : GradMode::adjoint;
      robust = !pgd(pipeline, ex.x, ex.label, attack, root.derive(kBpdaTag).derive(i), eval).success;
    }
    report.robust_correct[i] = robust;
  });
  report.clean = proportion_estimate(count(report.clean_correct), setup.n_eval);
  report.robust = proportion_estimate(count(report.robust_correct), setup.n_eval);
  return report;
}

}  // namespace coup::harness

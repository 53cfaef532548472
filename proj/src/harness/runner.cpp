#include <cmath>

#include <fmt/format.h>

#include "coup/errors.hpp"
#include "coup/harness/config.hpp"

namespace coup::harness {

namespace {

struct SymmetricPair {
  double mu;
  double variance;
};

SymmetricPair symmetric_pair_of(const ExperimentConfig& cfg) {
  const GaussianMixture gmm(cfg.mixture);
  const auto& c = gmm.components();
  if (gmm.dim() != 1 || c.size() != 2) {
    throw DomainError(fmt::format("{} needs a 1-D two-component mixture", cfg.kind));
  }
  if (c[0].mean[0] != -c[1].mean[0] || c[0].variance != c[1].variance || c[0].weight != c[1].weight) {
    throw DomainError(fmt::format("{} needs a symmetric mixture N(-mu, s^2), N(mu, s^2)", cfg.kind));
  }
  return {std::abs(c[0].mean[0]), c[0].variance};
}

ResultRow base_row(const ExperimentConfig& cfg, const std::string& experiment) {
  ResultRow r;
  r.experiment = experiment;
  r.lambda = cfg.lambda();
  r.c = cfg.c();
  r.t_star = cfg.t_star();
  r.step = cfg.step;
  r.trials = cfg.trials;
  r.seed = cfg.seed;
  return r;
}

ResultRow metric(ResultRow r, std::string name, double value) {
  r.metric = std::move(name);
  r.value = value;
  return r;
}

ResultRow estimate(ResultRow r, std::string name, const Estimate& e) {
  r.metric = std::move(name);
  r.value = e.value;
  r.ci_half_width = e.ci_half_width;
  r.trials = e.trials;
  return r;
}

Vec input_of(const ExperimentConfig& cfg) {
  return Eigen::Map<const Vec>(cfg.x.data(), static_cast<Eigen::Index>(cfg.x.size()));
}

std::vector<ResultRow> run_flip(const ExperimentConfig& cfg) {
  const auto pair = symmetric_pair_of(cfg);
  FlipSetup s;
  s.x0 = cfg.x.front();
  s.lambda = cfg.lambda();
  s.c = cfg.c();
  s.t_star = cfg.t_star();
  s.step = cfg.step;
  s.trials = cfg.trials;
  s.mode = cfg.mode;
  s.seed = cfg.seed;
  s.mu = pair.mu;
  s.variance = pair.variance;
  s.schedule = cfg.schedule();
  s.noise_enabled = cfg.noise;
  s.threads = cfg.threads;
  const char* name = cfg.mode == FlipMode::endpoint ? "flip_probability_endpoint"
                                                    : "flip_probability_first_passage";
  return {estimate(base_row(cfg, "flip-prob"), name, flip_probability(s))};
}

std::vector<ResultRow> run_prop1(const ExperimentConfig& cfg, const std::vector<double>& lambdas) {
  const GaussianMixture gmm(cfg.mixture);
  const auto& c = gmm.components();
  if (gmm.dim() != 1 || c.size() != 2) throw DomainError("prop1 needs a 1-D two-component mixture");
  const auto& neg = c[0].label == 0 ? c[0] : c[1];
  const auto& pos = c[0].label == 0 ? c[1] : c[0];
  Prop1Setup s;
  s.mean0 = neg.mean[0];
  s.mean1 = pos.mean[0];
  s.var0 = neg.variance;
  s.var1 = pos.variance;
  s.x0 = cfg.x.front();
  s.lambdas = lambdas;
  s.c = cfg.c();
  s.t_star = cfg.t_star();
  s.step = cfg.step;
  s.trials = cfg.trials;
  s.seed = cfg.seed;
  s.schedule = cfg.schedule();
  s.noise_enabled = cfg.noise;
  s.threads = cfg.threads;
  const Prop1Report report = prop1_audit(s);

  std::vector<ResultRow> rows;
  for (std::size_t i = 0; i < report.lambdas.size(); ++i) {
    ResultRow r = base_row(cfg, "prop1");
    r.lambda = report.lambdas[i];
    rows.push_back(estimate(r, "flip_probability_first_passage", report.probabilities[i]));
  }
  for (const auto& cmp : report.comparisons) {
    ResultRow r = base_row(cfg, "prop1");
    r.lambda = cmp.lambda;
    rows.push_back(metric(r, "z_vs_lambda0", cmp.test.z));
    rows.push_back(metric(r, "p_value_vs_lambda0", cmp.test.p_value));
    rows.push_back(metric(r, "strictly_lower_than_lambda0", cmp.strictly_lower ? 1.0 : 0.0));
    rows.push_back(metric(r, "dominance_violations", static_cast<double>(cmp.dominance_violations)));
  }
  return rows;
}

std::vector<ResultRow> run_bound(const ExperimentConfig& cfg) {
  ExperimentConfig local = cfg;
  const GaussianMixture prior(cfg.mixture);
  const Classifier classifier = build_classifier(local, prior);
  BoundAuditSetup s;
  s.x = input_of(cfg);
  s.prior = &prior;
  s.classifier = &classifier;
  s.schedule = cfg.schedule();
  s.lambda = cfg.lambda();
  s.t_star = cfg.t_star();
  s.step = cfg.step;
  s.trials = cfg.trials;
  s.seed = cfg.seed;
  s.noise_enabled = cfg.noise;
  s.threads = cfg.threads;
  const BoundAuditReport report = bound_audit(s);
  const ResultRow r = base_row(cfg, "bound-audit");
  return {
      metric(r, "violations", static_cast<double>(report.violations)),
      estimate(r, "violation_rate", proportion_estimate(report.violations, report.trials)),
      metric(r, "max_ratio", report.max_ratio),
      metric(r, "C_s", report.constants.c_s),
      metric(r, "C_p", report.constants.c_p),
      metric(r, "C_x", report.constants.c_x),
  };
}

std::vector<ResultRow> run_credibility(const ExperimentConfig& cfg) {
  const auto pair = symmetric_pair_of(cfg);
  CredibilitySetup s;
  s.n = cfg.cred_n;
  s.delta_x = cfg.cred_delta_x;
  s.mu = pair.mu;
  s.variance = pair.variance;
  s.repetitions = cfg.cred_repetitions;
  s.seed = cfg.seed;
  s.threads = cfg.threads;
  const CredibilityReport report = credibility_empirical(s);
  ResultRow r = base_row(cfg, "credibility");
  r.trials = report.repetitions;
  ResultRow sd = metric(r, "observed_sd", report.observed_sd);
  sd.ci_half_width = report.observed_sd_ci;
  return {
      metric(r, "p_x", report.p_x),
      metric(r, "formula_half_width",
             credibility_band(static_cast<double>(cfg.cred_n), report.p_x, cfg.cred_delta_x,
                              cfg.cred_c_quantile)),
      sd,
      metric(r, "relative_error_c1", report.relative_error),
  };
}

std::vector<ResultRow> run_robustness(const ExperimentConfig& cfg) {
  const GaussianMixture data(cfg.mixture);
  const Classifier classifier = build_classifier(cfg, data);
  RobustnessSetup s;
  s.data = &data;
  s.classifier = &classifier;
  s.schedule = cfg.schedule();
  s.defense = cfg.defense;
  s.lambda = cfg.lambda();
  s.t_star = cfg.t_star();
  s.step = cfg.step;
  s.noise_enabled = cfg.noise;
  s.attack = cfg.attack;
  s.both_grad_modes = cfg.both_grad_modes;
  s.n_eval = cfg.n_eval;
  s.seed = cfg.seed;
  s.threads = cfg.threads;
  const RobustnessReport report = robustness_eval(s);
  const ResultRow r = base_row(cfg, "robustness");
  return {estimate(r, "clean_accuracy", report.clean), estimate(r, "robust_accuracy", report.robust)};
}

std::vector<ResultRow> run_purify(const ExperimentConfig& cfg) {
  const GaussianMixture prior(cfg.mixture);
  const Classifier classifier = build_classifier(cfg, prior);
  Pipeline p;
  p.defense = cfg.defense;
  p.prior = &prior;
  p.classifier = &classifier;
  p.schedule = cfg.schedule();
  p.guidance = {cfg.lambda()};
  p.t_star = cfg.t_star();
  p.step = cfg.step;
  p.noise_enabled = cfg.noise;
  p.validate();
  const Vec out = p.purify(input_of(cfg), NoiseDriver(cfg.seed, 0), false).x_out;
  ResultRow r = base_row(cfg, "purify");
  r.trials = 1;
  std::vector<ResultRow> rows;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    rows.push_back(metric(r, fmt::format("x_out_{}", i), out[i]));
  }
  rows.push_back(metric(r, "label", confidence(classifier, out).argmax_label));
  return rows;
}

std::vector<ResultRow> dispatch(const ExperimentConfig& cfg, const std::string& kind) {
  if (kind == "flip-prob") return run_flip(cfg);
  if (kind == "prop1") {
    return run_prop1(cfg, cfg.lambda() > 0.0 ? std::vector<double>{0.0, cfg.lambda()}
                                             : std::vector<double>{0.0});
  }
  if (kind == "bound-audit") return run_bound(cfg);
  if (kind == "credibility") return run_credibility(cfg);
  if (kind == "robustness") return run_robustness(cfg);
  if (kind == "purify") return run_purify(cfg);
  throw ConfigError(fmt::format("experiment kind '{}' does not produce result rows", kind));
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.kind == "sweep") return run_sweep(cfg);
  return dispatch(cfg, cfg.kind);
}

std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t cells = cfg.lambdas.size() * cfg.cs.size() * cfg.t_stars.size();
  if (cells == 0) throw ConfigError("sweep has an empty parameter product");
  std::vector<ResultRow> rows;
  for (double lambda : cfg.lambdas) {
    for (double c : cfg.cs) {
      for (double t_star : cfg.t_stars) {
        ExperimentConfig cell = cfg;
        cell.kind = cfg.sweep_target;
        cell.lambdas = {lambda};
        cell.cs = {c};
        cell.t_stars = {t_star};
        auto cell_rows = dispatch(cell, cell.kind);
        rows.insert(rows.end(), cell_rows.begin(), cell_rows.end());
      }
    }
  }
  return rows;
}

std::vector<TracePoint> run_trace(const ExperimentConfig& cfg) {
  const GaussianMixture prior(cfg.mixture);
  const Classifier classifier = build_classifier(cfg, prior);
  const GuidedModel model{&prior, cfg.defense == DefenseKind::coup ? &classifier : nullptr,
                          cfg.schedule(), {cfg.lambda()}};
  PurifySpec spec;
  spec.t_star = cfg.t_star();
  spec.step = cfg.step;
  spec.master_seed = cfg.seed;
  return confidence_trace(input_of(cfg), {cfg.y_true, cfg.y_adv}, model, classifier, spec);
}

}  // namespace coup::harness

// Acceptance checks. With no arguments every criterion runs; otherwise only
// the named ones (e.g. `acceptance AC4 AC7`). Prints one PASS/FAIL line per
// criterion and exits non-zero if any failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <fmt/format.h>

#include "coup/harness/config.hpp"

using namespace coup;
using namespace coup::harness;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

template <class F>
double simpson(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

Outcome ac1_schedule() {
  const Schedule s(0.1, 20.0);
  const double g = simpson([](double t) { return 0.5 * (0.1 + 19.9 * t); }, 0.0, 0.1, 1000);
  const double a = std::exp(-2.0 * g);
  const double eg = std::abs(gamma_of(s, 0.1) - g) / g;
  const double ea = std::abs(alpha_of(s, 0.1) - a) / a;
  const bool ends = beta_at(s, 0.0) == 0.1 && beta_at(s, 1.0) == 20.0;
  return {eg < 1e-8 && ea < 1e-8 && ends,
          fmt::format("gamma(0.1)={:.9f} rel {:.1e}; alpha(0.1)={:.9f} rel {:.1e}; beta ends exact={}",
                      gamma_of(s, 0.1), eg, alpha_of(s, 0.1), ea, ends)};
}

Outcome ac2_linear_law() {
  const Schedule s;
  const GuidedModel linear{nullptr, nullptr, s, {0.0}};
  const int n = 10000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    PurifySpec spec;
    spec.master_seed = 2;
    spec.stream_id = static_cast<std::uint64_t>(i);
    const double y = coup_purify(Vec::Ones(1), linear, spec).x_out[0];
    s1 += y;
    s2 += y * y;
  }
  const double mean = s1 / n;
  const double sd = std::sqrt((s2 - n * mean * mean) / (n - 1));
  const auto st = linear_reverse_stats(s, 0.1);
  const double z = (mean - st.scale) / (sd / std::sqrt(n));
  const double rel = std::abs(sd - st.std) / st.std;
  return {std::abs(z) < 3.0 && rel < 0.02,
          fmt::format("mean {:.6f} vs {:.6f} ({:+.2f} SE); sd {:.6f} vs {:.6f} (rel {:.4f})", mean,
                      st.scale, z, sd, st.std, rel)};
}

Outcome ac3_score() {
  const Schedule s;
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const NoiseDriver d(303, i);
    const int dim = 1 + static_cast<int>(i % 3);
    const int k = 1 + static_cast<int>(d.uniform(0, 0) * 4);
    std::vector<MixtureComponent> comps;
    for (int j = 0; j < k; ++j) {
      comps.push_back({1.0 / k, 2.0 * d.normals(1 + j, dim), 0.1 + 2.0 * d.uniform(10, j), 0});
    }
    const GaussianMixture gmm(comps);
    const double t = d.uniform(20, 0);
    const Vec x = 2.0 * d.normals(21, dim);
    const Vec g = score_at(gmm, x, t, s);
    Vec fd(dim);
    const double h = 1e-5;
    for (int c = 0; c < dim; ++c) {
      Vec a = x, b = x;
      a[c] += h;
      b[c] -= h;
      fd[c] = (log_density(gmm, a, t, s) - log_density(gmm, b, t, s)) / (2 * h);
    }
    worst = std::max(worst, (g - fd).norm() / std::max(1.0, g.norm()));
  }
  return {worst < 1e-6, fmt::format("max rel error {:.2e} over 1000 (mixture, x, t) triples", worst)};
}

Outcome ac4_flip_trend() {
  ExperimentConfig cfg;
  cfg.kind = "sweep";
  cfg.sweep_target = "flip-prob";
  cfg.seed = 2024;
  cfg.trials = 100000;
  cfg.lambdas = {0.0, 0.5, 1.0, 2.0, 5.0, 10.0};
  const auto rows = run_sweep(cfg);
  std::vector<Estimate> p;
  for (const auto& r : rows) p.push_back({r.value, *r.ci_half_width, r.trials});
  const auto k = [&](std::size_t i) { return static_cast<std::size_t>(std::llround(p[i].value * cfg.trials)); };
  const auto test = two_proportion_test(k(2), cfg.trials, k(0), cfg.trials);
  bool trend = true;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i].value - p[i].ci_half_width > p[i - 1].value + p[i - 1].ci_half_width) trend = false;
  }
  std::string list;
  for (std::size_t i = 0; i < p.size(); ++i) list += fmt::format(" {}:{:.4f}", cfg.lambdas[i], p[i].value);
  return {p[2].value < p[0].value && test.p_value < 1e-3 && trend,
          fmt::format("P(l=1)={:.4f} < P(l=0)={:.4f}, p={:.1e}; sweep{}; non-increasing={}", p[2].value,
                      p[0].value, test.p_value, list, trend)};
}

Outcome ac5_bound() {
  const GaussianMixture prior = GaussianMixture::symmetric_pair(0.5, 1.0);
  const Classifier bayes = BayesClassifier::from_mixture(prior);
  BoundAuditSetup s;
  s.x = Vec::Constant(1, 0.2);
  s.prior = &prior;
  s.classifier = &bayes;
  s.trials = 1000;
  s.seed = 11;
  const auto r = bound_audit(s);
  return {r.violations == 0,
          fmt::format("{} violations in {} paths; max ratio {:.4f}; C_s {:.3f} C_p {:.3f} C_x {:.3f}",
                      r.violations, r.trials, r.max_ratio, r.constants.c_s, r.constants.c_p,
                      r.constants.c_x)};
}

Outcome ac6_adjoint() {
  const Schedule sched;
  double worst = 0.0;
  int used = 0;
  for (std::uint64_t i = 0; used < 20 && i < 200; ++i) {
    const NoiseDriver d(606, i);
    const int dim = 1 + static_cast<int>(i % 2);
    const GaussianMixture prior({{0.5, d.normals(0, dim), 0.4 + d.uniform(1, 0), 0},
                                 {0.5, d.normals(2, dim), 0.4 + d.uniform(1, 1), 1}});
    const Classifier cls = BayesClassifier::from_mixture(prior);
    const double lambdas[] = {0.0, 0.5, 1.0};
    const double tstars[] = {0.05, 0.1};
    const GuidedModel m{&prior, &cls, sched, {lambdas[i % 3]}};
    PurifySpec spec;
    spec.t_star = tstars[(i / 3) % 2];
    spec.master_seed = 6;
    spec.stream_id = i;
    spec.record_increments = true;
    const Vec x = d.normals(3, dim);
    const Vec w = d.normals(4, dim);
    const auto r = coup_purify(x, m, spec);
    const auto adj = augmented_solve(r.x_out, w, *r.trajectory, m);
    if (adj.crossed_boundary) continue;
    spec.record_increments = false;
    const Vec fd = fd_pathwise_grad([&](const Vec& y) { return w.dot(coup_purify(y, m, spec).x_out); }, x, 1e-5);
    worst = std::max(worst, (adj.grad - fd).norm() / fd.norm());
    ++used;
  }
  const GuidedModel linear{nullptr, nullptr, sched, {0.0}};
  PurifySpec spec;
  spec.record_increments = true;
  const auto r = coup_purify(Vec::Ones(1), linear, spec);
  const double factor = augmented_solve(r.x_out, Vec::Ones(1), *r.trajectory, linear).grad[0];
  const double scale = linear_reverse_stats(sched, 0.1).scale;
  const double factor_rel = std::abs(factor - scale) / scale;
  return {used == 20 && worst < 1e-3 && factor_rel < 1e-3,
          fmt::format("max rel error {:.2e} over {} configs; linear factor {:.7f} vs e^gamma {:.7f} (rel {:.1e}, "
                      "the gap is the Euler discretisation)",
                      worst, used, factor, scale, factor_rel)};
}

Outcome ac7_defense_order() {
  const GaussianMixture blobs({{0.5, (Vec(2) << -2, 0).finished(), 0.25, 0},
                               {0.5, (Vec(2) << 2, 0).finished(), 0.25, 1}});
  ExperimentConfig cfg;
  cfg.seed = 7;
  cfg.classifier.kind = ClassifierKind::logistic;
  const Classifier cls = build_classifier(cfg, blobs);
  RobustnessSetup s;
  s.data = &blobs;
  s.classifier = &cls;
  s.attack.norm = Norm::linf;
  s.attack.epsilon = 0.5;
  s.attack.step_size = 0.1;
  s.attack.iters = 10;
  s.attack.eot_samples = 8;
  s.attack.grad_mode = GradMode::adjoint;
  s.attack.random_start = true;
  s.n_eval = 512;
  s.seed = 7;
  s.lambda = 1.0;
  std::map<DefenseKind, RobustnessReport> out;
  for (DefenseKind k : {DefenseKind::none, DefenseKind::reverse_only, DefenseKind::coup}) {
    s.defense = k;
    out[k] = robustness_eval(s);
  }
  const auto count = [](const Estimate& e) { return static_cast<std::size_t>(std::llround(e.value * e.trials)); };
  const auto& none = out[DefenseKind::none].robust;
  const auto& rev = out[DefenseKind::reverse_only].robust;
  const auto& coup = out[DefenseKind::coup].robust;
  const auto vs_none = two_proportion_test(count(coup), coup.trials, count(none), none.trials);
  const auto vs_rev = two_proportion_test(count(coup), coup.trials, count(rev), rev.trials);
  const bool beats_none = coup.value > none.value && vs_none.p_value < 0.01;
  const bool not_below_rev = coup.value >= rev.value ||
                             coup.value + coup.ci_half_width >= rev.value - rev.ci_half_width;
  return {beats_none && not_below_rev,
          fmt::format("robust acc none {:.4f}, reverse_only {:.4f}, coup {:.4f}; coup>none p={:.3g}; "
                      "coup vs reverse p={:.3g}",
                      none.value, rev.value, coup.value, vs_none.p_value, vs_rev.p_value)};
}

Outcome ac8_credibility() {
  CredibilitySetup s;
  s.n = 10000;
  s.delta_x = 0.05;
  s.repetitions = 2000;
  s.seed = 5;
  const auto r = credibility_empirical(s);
  return {r.relative_error < 0.2,
          fmt::format("observed sd {:.5f} vs half-width {:.5f} (rel {:.3f}) over {} datasets", r.observed_sd,
                      r.formula_half_width, r.relative_error, r.repetitions)};
}

Outcome ac9_determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(COUP_SCRATCH_DIR) / "acceptance_scratch";
  fs::create_directories(dir);
  const fs::path robust_cfg = dir / "robust.ini";
  {
    std::ifstream in(std::string(COUP_CONFIG_DIR) + "/robustness_blobs.ini");
    std::ofstream o(robust_cfg);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("n_eval", 0) == 0) line = "n_eval = 24";
      if (line.rfind("eot_samples", 0) == 0) line = "eot_samples = 2";
      o << line << '\n';
    }
  }
  const std::string cfgdir = COUP_CONFIG_DIR;
  const std::vector<std::string> commands{
      "flip-prob --trials 3000 --seed 17",
      "flip-prob --trials 3000 --seed 17 --mode first-passage",
      "prop1 --trials 2000 --seed 3",
      "bound-audit --config " + cfgdir + "/bound_audit.ini --trials 100",
      "credibility --config " + cfgdir + "/credibility.ini",
      "robustness --config " + robust_cfg.string(),
      "sweep --config " + cfgdir + "/lambda_sweep.ini --trials 1000",
      "purify --seed 4 --lambda 2",
      "trace --config " + cfgdir + "/trace.ini",
  };
  int idx = 0;
  std::size_t identical = 0;
  std::string failures;
  for (const auto& c : commands) {
    std::vector<std::string> outputs;
    for (const char* threads : {"1", "1", "3"}) {
      const fs::path file = dir / fmt::format("run{}.csv", idx++);
      const std::string cmd = fmt::format("{} {} --threads {} > {} 2>/dev/null", COUP_CLI_PATH, c, threads, file.string());
      const int status = std::system(cmd.c_str());
      std::ifstream in(file, std::ios::binary);
      std::ostringstream s;
      s << in.rdbuf();
      outputs.push_back(WIFEXITED(status) && WEXITSTATUS(status) == 0 ? s.str() : std::string());
    }
    const bool same = !outputs[0].empty() && outputs[0] == outputs[1] && outputs[0] == outputs[2];
    identical += same;
    if (!same) failures += " [" + c + "]";
  }
  return {identical == commands.size(),
          fmt::format("{}/{} commands byte-identical across repeats and thread counts{}", identical,
                      commands.size(), failures)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1", ac1_schedule},   {"AC2", ac2_linear_law},     {"AC3", ac3_score},
      {"AC4", ac4_flip_trend}, {"AC5", ac5_bound},          {"AC6", ac6_adjoint},
      {"AC7", ac7_defense_order}, {"AC8", ac8_credibility}, {"AC9", ac9_determinism},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  bool all_pass = true;
  for (const auto& [name, fn] : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << fmt::format("{} {} ({:.1f}s) {}", name, o.pass ? "PASS" : "FAIL", secs, o.detail) << std::endl;
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}

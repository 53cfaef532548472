#pragma once

// Monte Carlo experiment drivers. Trial i always draws from stream
// (seed, i) or a stream derived from it, so results do not depend on the
// thread count.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "coup/attacks.hpp"
#include "coup/purifier.hpp"

namespace coup::harness {

struct Estimate {
  double value = 0.0;
  double ci_half_width = 0.0;
  std::size_t trials = 0;
};

inline constexpr double kZ95 = 1.959963984540054;

// Normal-approximation 95% interval for a binomial proportion.
Estimate proportion_estimate(std::size_t successes, std::size_t trials);

struct TwoProportionTest {
  double z = 0.0;
  double p_value = 1.0;  // two-sided
};

TwoProportionTest two_proportion_test(std::size_t successes_a, std::size_t trials_a,
                                      std::size_t successes_b, std::size_t trials_b);

// ------------------------------------------------------------ flip probability

enum class FlipMode { endpoint, first_passage };

// Symmetric 1-D toy: prior 1/2 N(-mu, var) + 1/2 N(mu, var), noisy classifier
// with level c, guided purification from x0.
struct FlipSetup {
  double x0 = 0.2;
  double lambda = 1.0;
  double c = 0.0;
  double t_star = 0.1;
  double step = kDefaultStep;
  std::size_t trials = 100000;
  FlipMode mode = FlipMode::endpoint;
  std::uint64_t seed = 0;
  double mu = 0.5;
  double variance = 1.0;
  Schedule schedule{};
  bool noise_enabled = true;
  unsigned threads = 1;
};

// Per-trial flip indicators; trial i uses stream (seed, i).
std::vector<std::uint8_t> flip_indicators(const FlipSetup& setup);

Estimate flip_probability(const FlipSetup& setup);

// ------------------------------------------------------------ proposition 1

struct Prop1Setup {
  // Class 0 ~ N(mean0, var0), class 1 ~ N(mean1, var1); must be mirror images.
  double mean0 = -0.5;
  double mean1 = 0.5;
  double var0 = 1.0;
  double var1 = 1.0;
  double x0 = 0.2;
  std::vector<double> lambdas{0.0, 1.0};
  double c = 0.0;
  double t_star = 0.1;
  double step = kDefaultStep;
  std::size_t trials = 100000;
  std::uint64_t seed = 0;
  Schedule schedule{};
  bool noise_enabled = true;
  unsigned threads = 1;
};

struct Prop1Comparison {
  double lambda;
  TwoProportionTest test;  // against lambda = 0
  bool strictly_lower;     // P(lambda) < P(0)
  // Trials flipped under lambda but not under lambda = 0 (shared noise).
  std::size_t dominance_violations;
};

struct Prop1Report {
  std::vector<double> lambdas;
  std::vector<Estimate> probabilities;  // first passage, one per lambda
  std::vector<Prop1Comparison> comparisons;
};

// First-passage flip probabilities on shared noise streams; every lambda > 0
// is compared with lambda = 0, which is evaluated even if not listed.
Prop1Report prop1_audit(const Prop1Setup& setup);

// ------------------------------------------------------------ proposition 2

struct BoundConstants {
  double c_s = 0.0;
  double c_p = 0.0;
  double c_x = 0.0;
};

struct BoundAuditSetup {
  Vec x;
  const GaussianMixture* prior = nullptr;
  const Classifier* classifier = nullptr;
  Schedule schedule{};
  double lambda = 1.0;
  double t_star = 0.1;
  double step = kDefaultStep;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
  bool noise_enabled = true;
  unsigned threads = 1;
};

struct BoundAuditReport {
  std::size_t violations = 0;
  double max_ratio = 0.0;
  BoundConstants constants;  // largest per-trial constants
  std::size_t trials = 0;
};

struct BoundCheck {
  double distance;  // |x_out - x|
  double bound;
  BoundConstants constants;
  double noise_norm;  // sqrt(e^{2 gamma} - 1) |eps|
};

// Evaluates the distance bound along one recorded path.
BoundCheck check_bound(const Trajectory& path, const GuidedModel& model, double t_star);

BoundAuditReport bound_audit(const BoundAuditSetup& setup);

// ------------------------------------------------------------ credibility band

// (c/2) sqrt((1/n)(1/(p_x dx) - 1)).
double credibility_band(double n, double p_x, double delta_x, double c_quantile);

struct CredibilitySetup {
  std::size_t n = 10000;  // total samples, split equally between the classes
  double delta_x = 0.05;
  double x = 0.0;
  double mu = 0.5;
  double variance = 1.0;
  std::size_t repetitions = 2000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct CredibilityReport {
  double p_x = 0.0;
  double formula_half_width = 0.0;  // c_quantile = 1
  double observed_sd = 0.0;
  double observed_sd_ci = 0.0;
  double relative_error = 0.0;
  std::size_t repetitions = 0;
  std::size_t empty_windows = 0;
};

// Spread of the windowed posterior estimate count_1 / (count_0 + count_1)
// over independent datasets, against the band formula.
CredibilityReport credibility_empirical(const CredibilitySetup& setup);

// ------------------------------------------------------------ robustness

struct RobustnessSetup {
  const GaussianMixture* data = nullptr;  // also the purifier prior
  const Classifier* classifier = nullptr;
  Schedule schedule{};
  DefenseKind defense = DefenseKind::coup;
  double lambda = 1.0;
  double t_star = 0.1;
  double step = kDefaultStep;
  bool noise_enabled = true;
  AttackSpec attack{};
  // Count an example as robust only if both adjoint and BPDA attacks fail.
  bool both_grad_modes = false;
  std::size_t n_eval = 512;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct RobustnessReport {
  Estimate clean;
  Estimate robust;
  std::vector<std::uint8_t> clean_correct;
  std::vector<std::uint8_t> robust_correct;
};

RobustnessReport robustness_eval(const RobustnessSetup& setup);

Pipeline make_pipeline(const RobustnessSetup& setup);

}  // namespace coup::harness

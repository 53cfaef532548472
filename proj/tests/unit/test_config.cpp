#include <sstream>

#include "doctest.h"

#include "coup/errors.hpp"
#include "coup/harness/config.hpp"

using namespace coup;
using namespace coup::harness;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults follow the toy study") {
  const auto cfg = parse("");
  CHECK(cfg.kind == "flip-prob");
  CHECK(cfg.x == std::vector<double>{0.2});
  CHECK(cfg.t_star() == 0.1);
  CHECK(cfg.step == 1e-3);
  CHECK(cfg.trials == 100000);
  CHECK(cfg.mode == FlipMode::endpoint);
  CHECK(cfg.mixture.size() == 2);
}

TEST_CASE("sections are parsed") {
  const auto cfg = parse(R"(
[experiment]
kind = robustness
seed = 42
threads = 3
[mixture]
weights = 0.25, 0.75
means = -2, 0 | 2, 1
variances = 0.5, 2
labels = 1, 0
[classifier]
kind = logistic
epochs = 10
[purifier]
lambda = 0.5
defense = diffpure
noise = false
[input]
x = 0.5, -1
[attack]
norm = l2
epsilon = 0.25
grad_mode = both
eot_samples = 4
)");
  CHECK(cfg.seed == 42);
  CHECK(cfg.threads == 3);
  REQUIRE(cfg.mixture.size() == 2);
  CHECK(cfg.mixture[1].mean[1] == 1.0);
  CHECK(cfg.mixture[0].label == 1);
  CHECK(cfg.mixture[1].variance == 2.0);
  CHECK(cfg.classifier.kind == ClassifierKind::logistic);
  CHECK(cfg.lambda() == 0.5);
  CHECK(cfg.defense == DefenseKind::diffpure);
  CHECK_FALSE(cfg.noise);
  CHECK(cfg.attack.norm == Norm::l2);
  CHECK(cfg.both_grad_modes);
  CHECK(cfg.attack.eot_samples == 4);
}

TEST_CASE("invalid input is rejected") {
  CHECK_THROWS_AS(parse("[experiment]\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[nowhere]\nkind = x\n"), ConfigError);
  CHECK_THROWS_AS(parse("[experiment]\nkind = teleport\n"), ConfigError);
  CHECK_THROWS_AS(parse("[experiment]\ntrials = many\n"), ConfigError);
  CHECK_THROWS_AS(parse("[experiment]\ntrials = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("[experiment]\nstep = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[experiment]\nmode = sometimes\n"), ConfigError);
  CHECK_THROWS_AS(parse("[schedule]\nbeta_min = 30\n"), ConfigError);
  CHECK_THROWS_AS(parse("[mixture]\nmeans = 0 | 1\nweights = 0.3, 0.3\n"), ConfigError);
  CHECK_THROWS_AS(parse("[mixture]\nmeans = 0 | 1\nvariances = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[purifier]\nlambda = 0, 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[purifier]\nt_star = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse("[input]\nx = 1, 2\n"), ConfigError);
  CHECK_THROWS_AS(parse("[attack]\nepsilon = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[experiment]\nkind = sweep\n[sweep]\ntarget = trace\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/coup.ini"), ConfigError);
}

TEST_CASE("sweep lists") {
  const auto cfg = parse("[experiment]\nkind = sweep\n[purifier]\nlambda = 0, 0.5, 1\nt_star = 0.05, 0.1\n");
  CHECK(cfg.lambdas.size() == 3);
  CHECK(cfg.t_stars.size() == 2);
  CHECK(parse_list("1, 2.5,-3") == std::vector<double>{1, 2.5, -3});
}

TEST_CASE("canonical form tracks every run-affecting field") {
  const auto a = parse("");
  auto b = a;
  CHECK(a.canonical() == b.canonical());
  b.seed = 1;
  CHECK(a.canonical() != b.canonical());
  b = a;
  b.threads = 8;
  CHECK(a.canonical() == b.canonical());
  b.attack.eot_fresh_noise = false;
  CHECK(a.canonical() != b.canonical());
}

TEST_CASE("shipped configs load") {
  for (const char* name : {"flip_toy.ini", "lambda_sweep.ini", "robustness_blobs.ini",
                           "bound_audit.ini", "credibility.ini", "trace.ini"}) {
    CHECK_NOTHROW(load_config(std::string(COUP_CONFIG_DIR) + "/" + name));
  }
}

TEST_CASE("classifier construction") {
  auto cfg = parse("[classifier]\nc = 0.5\n");
  const GaussianMixture data(cfg.mixture);
  const Classifier ns = build_classifier(cfg, data);
  CHECK(std::holds_alternative<NoisySineClassifier>(ns));
  cfg.classifier.kind = ClassifierKind::bayes;
  CHECK(std::holds_alternative<BayesClassifier>(build_classifier(cfg, data)));
  cfg.classifier.kind = ClassifierKind::logistic;
  const Classifier a = build_classifier(cfg, data);
  const Classifier b = build_classifier(cfg, data);
  CHECK(std::get<LogisticClassifier>(a).weights() == std::get<LogisticClassifier>(b).weights());
}

}  // TEST_SUITE

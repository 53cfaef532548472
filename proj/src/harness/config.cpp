#include "coup/harness/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "coup/errors.hpp"

namespace coup::harness {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"experiment", {"kind", "seed", "threads", "output", "trials", "step", "mode"}},
      {"schedule", {"beta_min", "beta_max"}},
      {"mixture", {"weights", "means", "variances", "labels"}},
      {"classifier", {"kind", "c", "epochs", "learning_rate", "train_samples"}},
      {"purifier", {"lambda", "t_star", "noise", "defense"}},
      {"input", {"x", "y_true", "y_adv"}},
      {"attack",
       {"norm", "epsilon", "step_size", "iters", "eot_samples", "grad_mode", "random_start",
        "eot_fresh_noise"}},
      {"robustness", {"n_eval"}},
      {"credibility", {"n", "delta_x", "c_quantile", "repetitions"}},
      {"sweep", {"target"}},
  };
  return keys;
}

const std::set<std::string> kKinds = {"flip-prob", "prop1",  "bound-audit", "credibility",
                                      "robustness", "purify", "trace",       "sweep"};

std::string trim(std::string s) {
  boost::algorithm::trim(s);
  return s;
}

double to_double(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, text));
  }
  return v;
}

template <class Int>
Int to_int(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError(fmt::format("{}: '{}' is not a valid integer", key, text));
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  const std::string s = boost::algorithm::to_lower_copy(trim(text));
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, text));
}

std::vector<std::string> split(const std::string& text, const char* sep) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, text, boost::algorithm::is_any_of(sep));
  for (auto& p : parts) p = trim(p);
  return parts;
}

FlipMode parse_mode(const std::string& s) {
  if (s == "endpoint") return FlipMode::endpoint;
  if (s == "first-passage" || s == "first_passage") return FlipMode::first_passage;
  throw ConfigError(fmt::format("mode must be endpoint or first-passage, got '{}'", s));
}

DefenseKind parse_defense(const std::string& s) {
  if (s == "none") return DefenseKind::none;
  if (s == "reverse_only") return DefenseKind::reverse_only;
  if (s == "coup") return DefenseKind::coup;
  if (s == "diffpure") return DefenseKind::diffpure;
  throw ConfigError(fmt::format("unknown defense '{}'", s));
}

ClassifierKind parse_classifier(const std::string& s) {
  if (s == "bayes") return ClassifierKind::bayes;
  if (s == "noisy_sine") return ClassifierKind::noisy_sine;
  if (s == "logistic") return ClassifierKind::logistic;
  throw ConfigError(fmt::format("unknown classifier kind '{}'", s));
}

const char* name(FlipMode m) { return m == FlipMode::endpoint ? "endpoint" : "first-passage"; }

const char* name(DefenseKind d) {
  switch (d) {
    case DefenseKind::none: return "none";
    case DefenseKind::reverse_only: return "reverse_only";
    case DefenseKind::coup: return "coup";
    case DefenseKind::diffpure: return "diffpure";
  }
  return "?";
}

const char* name(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::bayes: return "bayes";
    case ClassifierKind::noisy_sine: return "noisy_sine";
    case ClassifierKind::logistic: return "logistic";
  }
  return "?";
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_number(v[i]);
  }
  return out;
}

std::vector<MixtureComponent> parse_mixture(const pt::ptree& sec) {
  const auto means_text = sec.get_optional<std::string>("means");
  if (!means_text) throw ConfigError("[mixture] needs 'means'");
  const auto blocks = split(*means_text, "|");
  const std::size_t k = blocks.size();
  std::vector<MixtureComponent> comps(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto coords = parse_list(blocks[i]);
    comps[i].mean = Eigen::Map<const Vec>(coords.data(), static_cast<Eigen::Index>(coords.size()));
    comps[i].weight = 1.0 / static_cast<double>(k);
    comps[i].variance = 1.0;
    comps[i].label = static_cast<int>(i);
  }
  auto fill = [&](const char* key, auto apply) {
    if (const auto t = sec.get_optional<std::string>(key)) {
      const auto values = parse_list(*t);
      if (values.size() != k) {
        throw ConfigError(fmt::format("[mixture] {} needs {} entries, got {}", key, k, values.size()));
      }
      for (std::size_t i = 0; i < k; ++i) apply(comps[i], values[i]);
    }
  };
  fill("weights", [](MixtureComponent& c, double v) { c.weight = v; });
  fill("variances", [](MixtureComponent& c, double v) { c.variance = v; });
  fill("labels", [](MixtureComponent& c, double v) {
    if (v != std::floor(v) || v < 0) throw ConfigError("[mixture] labels must be non-negative integers");
    c.label = static_cast<int>(v);
  });
  return comps;
}

}  // namespace

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ",")) {
    out.push_back(to_double("list", part));
  }
  return out;
}

ExperimentConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config parse error: {}", e.message()));
  }
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) {
      throw ConfigError(fmt::format("unknown config section [{}]", section));
    }
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) {
        throw ConfigError(fmt::format("unknown key '{}' in [{}]", key, section));
      }
    }
  }

  ExperimentConfig cfg;
  auto get = [&](const char* path) { return tree.get_optional<std::string>(pt::ptree::path_type(path, '.')); };

  if (auto v = get("experiment.kind")) cfg.kind = trim(*v);
  if (auto v = get("experiment.seed")) cfg.seed = to_int<std::uint64_t>("seed", *v);
  if (auto v = get("experiment.threads")) cfg.threads = to_int<unsigned>("threads", *v);
  if (auto v = get("experiment.output")) cfg.output = trim(*v);
  if (auto v = get("experiment.trials")) cfg.trials = to_int<std::size_t>("trials", *v);
  if (auto v = get("experiment.step")) cfg.step = to_double("step", *v);
  if (auto v = get("experiment.mode")) cfg.mode = parse_mode(trim(*v));

  if (auto v = get("schedule.beta_min")) cfg.beta_min = to_double("beta_min", *v);
  if (auto v = get("schedule.beta_max")) cfg.beta_max = to_double("beta_max", *v);

  if (auto sec = tree.get_child_optional("mixture")) cfg.mixture = parse_mixture(*sec);

  if (auto v = get("classifier.kind")) cfg.classifier.kind = parse_classifier(trim(*v));
  if (auto v = get("classifier.c")) cfg.cs = parse_list(*v);
  if (auto v = get("classifier.epochs")) cfg.classifier.epochs = to_int<int>("epochs", *v);
  if (auto v = get("classifier.learning_rate")) cfg.classifier.learning_rate = to_double("learning_rate", *v);
  if (auto v = get("classifier.train_samples")) cfg.classifier.train_samples = to_int<std::size_t>("train_samples", *v);

  if (auto v = get("purifier.lambda")) cfg.lambdas = parse_list(*v);
  if (auto v = get("purifier.t_star")) cfg.t_stars = parse_list(*v);
  if (auto v = get("purifier.noise")) cfg.noise = to_bool("noise", *v);
  if (auto v = get("purifier.defense")) cfg.defense = parse_defense(trim(*v));

  if (auto v = get("input.x")) cfg.x = parse_list(*v);
  if (auto v = get("input.y_true")) cfg.y_true = to_int<int>("y_true", *v);
  if (auto v = get("input.y_adv")) cfg.y_adv = to_int<int>("y_adv", *v);

  if (auto v = get("attack.norm")) {
    const std::string s = trim(*v);
    if (s == "linf") cfg.attack.norm = Norm::linf;
    else if (s == "l2") cfg.attack.norm = Norm::l2;
    else throw ConfigError(fmt::format("attack norm must be linf or l2, got '{}'", s));
  }
  if (auto v = get("attack.epsilon")) cfg.attack.epsilon = to_double("epsilon", *v);
  if (auto v = get("attack.step_size")) cfg.attack.step_size = to_double("step_size", *v);
  if (auto v = get("attack.iters")) cfg.attack.iters = to_int<int>("iters", *v);
  if (auto v = get("attack.eot_samples")) cfg.attack.eot_samples = to_int<int>("eot_samples", *v);
  if (auto v = get("attack.grad_mode")) {
    const std::string s = trim(*v);
    cfg.both_grad_modes = false;
    if (s == "adjoint") cfg.attack.grad_mode = GradMode::adjoint;
    else if (s == "bpda") cfg.attack.grad_mode = GradMode::bpda;
    else if (s == "both") { cfg.attack.grad_mode = GradMode::adjoint; cfg.both_grad_modes = true; }
    else throw ConfigError(fmt::format("grad_mode must be adjoint, bpda or both, got '{}'", s));
  }
  if (auto v = get("attack.random_start")) cfg.attack.random_start = to_bool("random_start", *v);
  if (auto v = get("attack.eot_fresh_noise")) cfg.attack.eot_fresh_noise = to_bool("eot_fresh_noise", *v);

  if (auto v = get("robustness.n_eval")) cfg.n_eval = to_int<std::size_t>("n_eval", *v);

  if (auto v = get("credibility.n")) cfg.cred_n = to_int<std::size_t>("n", *v);
  if (auto v = get("credibility.delta_x")) cfg.cred_delta_x = to_double("delta_x", *v);
  if (auto v = get("credibility.c_quantile")) cfg.cred_c_quantile = to_double("c_quantile", *v);
  if (auto v = get("credibility.repetitions")) cfg.cred_repetitions = to_int<std::size_t>("repetitions", *v);

  if (auto v = get("sweep.target")) cfg.sweep_target = trim(*v);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path));
  return parse_config(in);
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (!kKinds.contains(kind)) fail(fmt::format("unknown experiment kind '{}'", kind));
  if (kind != "sweep" && (lambdas.size() != 1 || cs.size() != 1 || t_stars.size() != 1)) {
    fail("lists of lambda, c or t_star are only allowed for kind = sweep");
  }
  if (kind == "sweep" && (sweep_target == "sweep" || sweep_target == "trace" || !kKinds.contains(sweep_target))) {
    fail(fmt::format("invalid sweep target '{}'", sweep_target));
  }
  if (lambdas.empty() || cs.empty() || t_stars.empty()) fail("lambda, c and t_star lists must be non-empty");
  if (threads < 1) fail("threads must be >= 1");
  if (trials < 1) fail("trials must be >= 1");
  if (!(step > 0.0)) fail("step must be positive");
  if (!(beta_min > 0.0 && beta_min < beta_max)) fail("schedule needs 0 < beta_min < beta_max");
  for (double l : lambdas) if (!(l >= 0.0)) fail("lambda must be >= 0");
  for (double c : cs) if (!(c >= 0.0)) fail("c must be >= 0");
  for (double t : t_stars) if (!(t >= 0.0 && t <= 1.0)) fail("t_star must lie in [0, 1]");
  if (x.empty()) fail("input x must be non-empty");
  if (classifier.epochs < 0) fail("epochs must be >= 0");
  if (!(classifier.learning_rate > 0.0)) fail("learning_rate must be positive");
  if (classifier.train_samples < 2) fail("train_samples must be >= 2");
  if (n_eval < 1) fail("n_eval must be >= 1");
  if (cred_n < 2 || cred_repetitions < 2) fail("credibility n and repetitions must be >= 2");
  if (!(cred_delta_x > 0.0)) fail("delta_x must be positive");
  try {
    attack.validate();
    const GaussianMixture check(mixture);
    if (static_cast<Eigen::Index>(x.size()) != check.dim()) {
      fail(fmt::format("input x has dimension {}, mixture has {}", x.size(), check.dim()));
    }
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  out << "kind=" << kind << "\nseed=" << seed << "\ntrials=" << trials
      << "\nstep=" << format_number(step) << "\nmode=" << name(mode)
      << "\nbeta=" << format_number(beta_min) << "," << format_number(beta_max) << "\nmixture=";
  for (const auto& c : mixture) {
    out << format_number(c.weight) << ":";
    for (Eigen::Index i = 0; i < c.mean.size(); ++i) out << (i ? "," : "") << format_number(c.mean[i]);
    out << ":" << format_number(c.variance) << ":" << c.label << ";";
  }
  out << "\nclassifier=" << name(classifier.kind) << "," << classifier.epochs << ","
      << format_number(classifier.learning_rate) << "," << classifier.train_samples
      << "\nlambda=" << join(lambdas) << "\nc=" << join(cs) << "\nt_star=" << join(t_stars)
      << "\nnoise=" << noise << "\ndefense=" << name(defense) << "\nx=" << join(x)
      << "\nlabels=" << y_true << "," << y_adv << "\nattack=" << static_cast<int>(attack.norm) << ","
      << format_number(attack.epsilon) << "," << format_number(attack.step_size) << ","
      << attack.iters << "," << attack.eot_samples << "," << static_cast<int>(attack.grad_mode) << ","
      << both_grad_modes << "," << attack.random_start << "," << attack.eot_fresh_noise
      << "\nn_eval=" << n_eval << "\ncredibility=" << cred_n << "," << format_number(cred_delta_x)
      << "," << format_number(cred_c_quantile) << "," << cred_repetitions
      << "\nsweep_target=" << sweep_target << "\n";
  return out.str();
}

Classifier build_classifier(const ExperimentConfig& cfg, const GaussianMixture& data) {
  switch (cfg.classifier.kind) {
    case ClassifierKind::bayes:
      return BayesClassifier::from_mixture(data);
    case ClassifierKind::noisy_sine: {
      const auto& comps = data.components();
      if (data.dim() != 1 || comps.size() != 2) {
        throw DomainError("noisy_sine classifier needs a 1-D two-component mixture");
      }
      const auto& a = comps[0].label == 0 ? comps[0] : comps[1];
      const auto& b = comps[0].label == 0 ? comps[1] : comps[0];
      return NoisySineClassifier({a.mean[0], a.variance}, {b.mean[0], b.variance}, cfg.c());
    }
    case ClassifierKind::logistic: {
      const NoiseDriver train(cfg.seed, 0xC1A5'5000'0000'0001ull);
      LogisticFitOptions opts;
      opts.epochs = cfg.classifier.epochs;
      opts.learning_rate = cfg.classifier.learning_rate;
      return fit_logistic(sample(data, cfg.classifier.train_samples, train), opts).model;
    }
  }
  throw ConfigError("unknown classifier kind");
}

}  // namespace coup::harness

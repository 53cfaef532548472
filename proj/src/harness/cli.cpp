#include "coup/harness/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <fmt/format.h>
#include "CLI11.hpp"

#include "coup/errors.hpp"
#include "coup/harness/config.hpp"

namespace coup::harness {

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::string trace;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::optional<double> lambda;
  std::optional<double> t_star;
  std::optional<double> step;
  std::optional<unsigned> threads;
  std::optional<FlipMode> mode;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out", o.out, "results CSV path (default stdout)");
  cmd->add_option("--trials", o.trials, "Monte Carlo trials");
  cmd->add_option("--lambda", o.lambda, "guidance weight");
  cmd->add_option("--tstar", o.t_star, "diffusion time");
  cmd->add_option("--step", o.step, "integration step");
  cmd->add_option("--threads", o.threads, "worker threads");
  const std::map<std::string, FlipMode> modes{{"endpoint", FlipMode::endpoint},
                                             {"first-passage", FlipMode::first_passage}};
  cmd->add_option("--mode", o.mode, "endpoint|first-passage")
      ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
}

ExperimentConfig resolve(const std::string& kind, const Overrides& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  // A config written for one experiment can drive a sweep of it.
  if (kind == "sweep" && cfg.kind != "sweep") {
    if (cfg.kind != "trace") cfg.sweep_target = cfg.kind;
    cfg.kind = "sweep";
  } else if (kind != "sweep") {
    cfg.kind = kind;
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.trials) cfg.trials = *o.trials;
  if (o.lambda) cfg.lambdas = {*o.lambda};
  if (o.t_star) cfg.t_stars = {*o.t_star};
  if (o.step) cfg.step = *o.step;
  if (o.threads) cfg.threads = *o.threads;
  if (o.mode) cfg.mode = *o.mode;
  if (!o.out.empty()) cfg.output = o.out;
  cfg.validate();
  return cfg;
}

template <class Write>
void emit(const ExperimentConfig& cfg, Write write, double seconds) {
  if (cfg.output.empty()) {
    write(std::cout);
    return;
  }
  std::ofstream out(cfg.output, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", cfg.output));
  write(out);
  std::ofstream man(cfg.output + ".manifest.json", std::ios::binary);
  if (!man) throw std::runtime_error(fmt::format("cannot write '{}.manifest.json'", cfg.output));
  RunManifest m;
  m.config_digest = digest(cfg.canonical());
  m.master_seed = cfg.seed;
  m.wall_clock_seconds = seconds;
  write_manifest(man, m);
}

int execute(const std::string& kind, const Overrides& o) {
  const ExperimentConfig cfg = resolve(kind, o);
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  if (kind == "trace") {
    const auto trace = run_trace(cfg);
    emit(cfg, [&](std::ostream& os) { write_trace_csv(os, trace); }, elapsed());
    return 0;
  }
  const auto rows = run_experiment(cfg);
  if (kind == "purify" && !o.trace.empty()) {
    std::ofstream t(o.trace, std::ios::binary);
    if (!t) throw std::runtime_error(fmt::format("cannot write '{}'", o.trace));
    write_trace_csv(t, run_trace(cfg));
  }
  emit(cfg, [&](std::ostream& os) { write_csv(os, rows); }, elapsed());
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Classifier-guided diffusion purification experiments", "coup_cli"};
  app.require_subcommand(1);
  Overrides o;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"purify", "purify one input and print the output state"},
      {"flip-prob", "label flip probability on the 1-D toy"},
      {"prop1", "first-passage flip ordering across guidance weights"},
      {"bound-audit", "audit the purification distance bound"},
      {"credibility", "windowed posterior spread against the band formula"},
      {"robustness", "clean and robust accuracy under attack"},
      {"sweep", "Cartesian sweep over lambda, c and t_star"},
      {"trace", "confidence trace CSV along a noise-free purification"},
  };
  std::string chosen;
  for (const auto& [name, help] : commands) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, o);
    if (name == "purify") cmd->add_option("--trace", o.trace, "also write a confidence trace CSV");
    cmd->callback([&chosen, n = name] { chosen = n; });
  }

  if (argc <= 1) {
    std::cerr << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    return execute(chosen, o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace coup::harness

// dsmcsg: config-driven runner for the DSMC-sG experiments.
//
//   dsmcsg run      [CONFIG] [section.key=value ...] [--out DIR] [--threads N]
//   dsmcsg validate [CONFIG] [section.key=value ...]
//   dsmcsg replay   --log FILE --order M [CONFIG] [section.key=value ...]
//
// Exit codes: 0 all checks passed, 1 a check failed, 2 configuration
// error, 3 runtime error.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "config.hpp"
#include "experiments.hpp"

namespace {

using namespace dsmcsg;
using namespace dsmcsg::app;

enum Exit { kOk = 0, kCheckFailed = 1, kConfigError = 2, kRuntimeError = 3 };

struct Args {
  std::vector<std::string> positional;
  std::string out;
  int threads = -1;
  std::string log;
  int order = -1;
};

ExperimentConfig load(const Args& a) {
  std::string path;
  std::vector<std::string> overrides;
  for (const auto& p : a.positional) {
    if (p.find('=') == std::string::npos && path.empty() && overrides.empty()) path = p;
    else overrides.push_back(p);
  }
  auto cfg = load_config(path, overrides);
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (a.threads >= 0) cfg.threads = a.threads;
  return cfg;
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int finish(const ExperimentResult& r, const std::filesystem::path& out) {
  std::size_t failed = 0;
  for (const auto& c : r.checks) failed += c.passed ? 0 : 1;
  fmt::print("{} file(s) written to {}\n", r.files.size(), out.string());
  if (!r.checks.empty()) fmt::print("{} of {} checks passed\n", r.checks.size() - failed, r.checks.size());
  return failed ? kCheckFailed : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DSMC stochastic-Galerkin experiments for kinetic models with uncertain kernels"};
  app.require_subcommand(1);

  Args args;
  auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a config file");
  run_cmd->add_option("args", args.positional, "Config file followed by section.key=value overrides");
  run_cmd->add_option("-o,--out", args.out, "Output directory");
  run_cmd->add_option("-t,--threads", args.threads, "Worker thread cap (0: OpenMP default)");

  auto* validate_cmd = app.add_subcommand("validate", "Check a config and print it fully resolved");
  validate_cmd->add_option("args", args.positional, "Config file followed by section.key=value overrides");

  auto* replay_cmd = app.add_subcommand("replay", "Re-run a stored event log at another gPC order");
  replay_cmd->add_option("--log", args.log, "Event log written by a run with experiment.write_log=true")
      ->required();
  replay_cmd->add_option("--order", args.order, "gPC order for every random dimension")->required();
  replay_cmd->add_option("args", args.positional, "Config file followed by section.key=value overrides");
  replay_cmd->add_option("-o,--out", args.out, "Output directory");
  replay_cmd->add_option("-t,--threads", args.threads, "Worker thread cap (0: OpenMP default)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  ExperimentConfig cfg;
  try {
    cfg = load(args);
    validate_config(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  if (*validate_cmd) {
    std::cout << "; config_hash=" << cfg.hash() << '\n' << cfg.to_ini();
    return kOk;
  }

  set_threads(cfg.threads);
  const auto out = output_directory(cfg);
  try {
    if (*run_cmd) {
      fmt::print("experiment {} -> {}\n", to_string(cfg.experiment), out.string());
      const auto r = run_experiment(cfg, out, std::cout);
      return finish(r, out);
    }
    const auto r = replay_experiment(cfg, args.log, args.order, out, std::cout);
    return finish(r, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

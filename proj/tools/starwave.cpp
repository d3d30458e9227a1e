// starwave <experiment> [--config PATH] [--set K=V]... [--out DIR] [--seed U64] [--quiet]

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "starwave/experiments.hpp"

using namespace starwave;

int main(int argc, char** argv) {
  CLI::App app{"Experiments for NLS on star graphs"};
  app.require_subcommand(1);

  std::string config_path, out_dir, seed;
  std::vector<std::string> overrides;
  bool quiet = false;

  std::vector<CLI::App*> subs;
  for (const auto& name : ExperimentConfig::experiments()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", config_path, "key = value config file");
    sub->add_option("--set", overrides, "override one key (repeatable)")->take_all();
    sub->add_option("--out", out_dir, "output directory (default $STARWAVE_OUT or ./out/<experiment>)");
    sub->add_option("--seed", seed, "64-bit seed for random data");
    sub->add_flag("--quiet", quiet, "no summary on stdout");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const CLI::App* chosen = nullptr;
  for (auto* s : subs)
    if (s->parsed()) chosen = s;
  const std::string experiment = chosen->get_name();

  ExperimentConfig cfg = ExperimentConfig::defaults(experiment);
  try {
    if (!config_path.empty()) cfg.parse_file(config_path);
    for (const auto& kv : overrides) cfg.set(kv);
    if (!seed.empty()) cfg.set("seed", seed);
    (void)cfg.get_u64("seed");
  } catch (const Error& e) {
    std::cerr << "starwave: " << e.what() << "\n";
    return exit_code_for(e.kind());
  }

  if (out_dir.empty()) {
    const char* env = std::getenv("STARWAVE_OUT");
    out_dir = env && *env ? std::string(env) : "out";
    out_dir += "/" + experiment;
  }

  const RunResult r = run_experiment(cfg, out_dir);
  if (!quiet) {
    std::cout << experiment << " -> " << out_dir << " (exit " << r.exit_code << ")\n"
              << r.summary;
  } else if (r.exit_code != 0) {
    std::cerr << r.summary;
  }
  return r.exit_code;
}

#include "otbayes/bench/config.hpp"
#include "otbayes/bench/experiment.hpp"
#include "otbayes/bench/plotdata.hpp"
#include "otbayes/version.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir, const std::optional<std::uint64_t>& seed,
            int jobs) {
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "otbayes: cannot read config " << config_path << '\n';
    return 2;
  }
  std::stringstream text;
  text << in.rdbuf();
  otbayes::bench::ExperimentConfig cfg;
  try {
    cfg = otbayes::bench::parse_config(text.str());
  } catch (const std::exception& e) {
    std::cerr << "otbayes: invalid config " << config_path << ": " << e.what() << '\n';
    return 2;
  }
  otbayes::bench::RunOptions options;
  options.out_dir = out_dir.empty() ? cfg.output_dir : out_dir;
  if (options.out_dir.empty()) {
    std::cerr << "otbayes: no output directory (pass --out or set output_dir in the config)\n";
    return 2;
  }
  options.seed = seed;
  options.jobs = jobs;
  options.config_text = text.str();
  return otbayes::bench::run_experiment(cfg, options, std::cerr);
}

}  // namespace

int main(int argc, char** argv) {
  otbayes::bench::retain_heap();
  CLI::App app{"otbayes: optimal-transport Bayes updates and filters"};
  app.set_version_flag("--version", std::string(otbayes::kVersion));
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  run->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory (default: output_dir from the config)");
  run->add_option("--seed", seed, "override the master seed");
  run->add_option("--jobs", jobs, "parallel cells")->check(CLI::PositiveNumber);

  auto* plot = app.add_subcommand("plotdata", "aggregate a finished run into plot-ready CSV");
  std::string run_dir;
  plot->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  if (*run) return cmd_run(config_path, out_dir, seed, jobs);
  try {
    otbayes::bench::emit_plotdata(run_dir);
  } catch (const std::exception& e) {
    std::cerr << "otbayes: " << e.what() << '\n';
    return 1;
  }
  std::cerr << "wrote " << run_dir << "/plotdata\n";
  return 0;
}

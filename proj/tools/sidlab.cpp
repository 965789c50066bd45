// sidlab - command line front end for the self-interacting diffusion lab.
//
//   sidlab run <config.json> [--workers N] [--out DIR]
//   sidlab validate <config.json>
//
// Exit status reflects hard errors only; assertion-style checks land in
// checks.txt next to the outputs.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "sidlab/errors.hpp"
#include "sidlab/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"sidlab: self-interacting diffusion laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  int workers = 0;
  std::string out_dir;

  CLI::App* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "path to the experiment JSON config")
      ->required();
  run->add_option("--workers", workers,
                  "replica worker threads (default: SIDLAB_WORKERS or hardware)");
  run->add_option("--out", out_dir, "override the config's output directory");

  CLI::App* validate = app.add_subcommand("validate", "validate a config file");
  validate
      ->add_option("config", config_path, "path to the experiment JSON config")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = sidlab::ExperimentConfig::from_file(config_path);
    if (validate->parsed()) {
      std::printf("OK: %s (%s)\n", config_path.c_str(),
                  sidlab::to_string(cfg.experiment).c_str());
      return 0;
    }
    sidlab::RunOptions opts;
    opts.workers = workers;
    opts.out_dir_override = out_dir;
    const sidlab::RunManifest manifest = sidlab::run_experiment(cfg, opts);
    std::printf("experiment: %s\n", sidlab::to_string(cfg.experiment).c_str());
    std::printf("outputs:    %s\n", manifest.output_dir.c_str());
    std::printf("config:     %s\n", manifest.config_hash.c_str());
    std::printf("checks:     %s\n", manifest.checks_passed ? "all PASS"
                                                           : "some FAIL (see checks.txt)");
    std::printf("wall clock: %.3f s\n", manifest.wall_clock_seconds);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

// conceptlab: command-line front end for the rule-learning experiments.

#include <iostream>

#include "CLI11.hpp"
#include "conceptlab/error.hpp"
#include "conceptlab/experiment.hpp"

using namespace conceptlab;

int main(int argc, char** argv) {
  CLI::App app{"Rule-learning experiments: exemplar lists, a Bayesian learner, hosted-model runs and reports"};
  app.require_subcommand(1);
  std::string config_path = "experiment.json";
  app.add_option("-c,--config", config_path, "experiment config (JSON)");
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "override the config seed");
  std::optional<std::size_t> jobs;
  app.add_option("-j,--jobs", jobs, "worker threads (0: all cores)");

  auto* gen = app.add_subcommand("gen", "generate an exemplar list per manifest rule");

  auto* run = app.add_subcommand("run", "label every list with the learner or a hosted model");
  std::string engine;
  bool force = false;
  run->add_option("engine", engine, "plot | llm")->required()->check(CLI::IsMember({"plot", "llm"}));
  run->add_flag("--force", force, "redo rules that already have outputs");

  auto* grade = app.add_subcommand("grade", "score reported rules: likelihood, consistency, match");
  std::string concepts, series_dir;
  grade->add_option("concepts", concepts, "rule_id<TAB>set_index<TAB>concept lines")->required()->check(CLI::ExistingFile);
  grade->add_option("--series", series_dir, "label series directory used for consistency");

  auto* report = app.add_subcommand("report", "accuracy table, trajectories and human comparisons");
  auto* split = app.add_subcommand("split", "partition rules into training and held-out sets");
  auto* fit = app.add_subcommand("fit-noise", "grid-fit the learner's noise parameters to human data");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    if (seed) cfg.seed = *seed;
    if (jobs) cfg.jobs = *jobs;
    if (gen->parsed()) return cmd_gen(cfg, std::cerr);
    if (run->parsed()) return cmd_run(cfg, engine, std::cerr, force);
    if (grade->parsed()) return cmd_grade(cfg, concepts, series_dir, std::cerr);
    if (report->parsed()) return cmd_report(cfg, std::cerr);
    if (split->parsed()) return cmd_split(cfg, std::cerr);
    if (fit->parsed()) return cmd_fit_noise(cfg, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitFailure;
}

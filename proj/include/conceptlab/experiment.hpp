#pragma once

// Experiment orchestration behind the command-line tool: list generation,
// learner and model runs, grading, reporting, rule splits and noise fits.
// Every command reads one JSON config and writes deterministic files under
// its output directory.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "conceptlab/grammar.hpp"
#include "conceptlab/human.hpp"
#include "conceptlab/learner.hpp"
#include "conceptlab/llm.hpp"
#include "conceptlab/metrics.hpp"
#include "conceptlab/rules.hpp"

namespace conceptlab {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitTransport = 4,
};

int exit_code_for(const std::exception& e);

struct LearnerSettings {
  std::string name = "plot";  // model label in outputs
  std::string grammar;        // empty: built-in FOL grammar
  std::size_t max_size = 4;
  double alpha = 0.99;
  double beta = 0.5;
  std::string engine = "enumerate";  // enumerate | mh
  std::size_t mh_iterations = 100'000;
  std::size_t mh_burn_in = 1'000;
  std::size_t posterior_top_k = 10;
  double fit_step = 0.05;
};

struct ExperimentConfig {
  std::string base_dir;  // relative paths resolve against this
  std::string vocab;     // empty: default vocabulary
  std::string rules;
  std::string lists_dir = "lists";
  std::string output_dir = "out";
  std::string endpoint;
  std::string human;
  std::string prompt_mode = "chat";
  std::uint64_t seed = 0;
  std::size_t n_sets = kDefaultSetCount;
  std::size_t jobs = 0;  // 0: hardware concurrency
  std::size_t held_out = 20;
  std::optional<std::uint64_t> split_seed;
  std::size_t subsamples = 1000;
  LearnerSettings learner;

  static ExperimentConfig from_json(const nlohmann::json& j, std::string base_dir);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;

  std::string resolve(const std::string& path) const;
  std::string out(const std::string& rel) const;
  FeatureVocab load_vocab() const;
  RuleManifest load_rules() const;
  std::string list_path(const std::string& rule_id) const;
};

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag);

// ---- label series files ----------------------------------------------------

struct SeriesRow {
  LabelRecord record;
  std::string object;
  std::string reason;
};

void write_series_csv(const std::string& path, const std::vector<SeriesRow>& rows);
LabelSeries read_series_csv(const std::string& path);

// ---- learner runs ----------------------------------------------------------

struct MapEntry {
  std::size_t set_index = 0;  // rule held before labeling this set
  Concept rule;
};

struct PlotRun {
  std::vector<SeriesRow> rows;
  std::vector<MapEntry> map_rules;  // n_sets + 1 entries, the last after all feedback
  std::string posterior_csv;
};

Grammar load_grammar(const ExperimentConfig& cfg, const FeatureVocab& vocab);

// Labels every set of `list` with the learner, conditioning on gold labels
// of earlier sets. `support` is required for the enumerate engine.
PlotRun run_plot_rule(const ExemplarList& list, const Grammar& g,
                      const std::vector<PriorHypothesis>* support, const LearnerSettings& settings,
                      std::uint64_t seed);

// ---- commands --------------------------------------------------------------

using TransportFactory = std::function<std::unique_ptr<Transport>(const EndpointConfig&)>;

int cmd_gen(const ExperimentConfig& cfg, std::ostream& log);
// engine: plot | llm. Rules whose outputs already exist are skipped unless
// `force`.
int cmd_run(const ExperimentConfig& cfg, const std::string& engine, std::ostream& log,
            bool force = false, TransportFactory transport = {});
// `concepts` holds "rule_id<TAB>set_index<TAB>concept" lines; `series_dir`
// (optional) supplies the labels for consistency.
int cmd_grade(const ExperimentConfig& cfg, const std::string& concepts, const std::string& series_dir,
              std::ostream& log);
int cmd_report(const ExperimentConfig& cfg, std::ostream& log);
int cmd_split(const ExperimentConfig& cfg, std::ostream& log);
int cmd_fit_noise(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace conceptlab

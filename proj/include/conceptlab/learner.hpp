#pragma once

// Bayesian rule learner: a noisy-rule likelihood over a grammar-defined
// hypothesis space, exact posterior by enumeration, Metropolis-Hastings over
// derivations, posterior-predictive labeling and MAP extraction.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "conceptlab/exemplar.hpp"
#include "conceptlab/grammar.hpp"
#include "conceptlab/human.hpp"

namespace conceptlab {

// alpha: probability a label follows the rule. Otherwise the label is drawn
// from a baseline that says True with probability beta.
struct NoiseParams {
  double alpha = 0.99;
  double beta = 0.5;

  void validate() const;
};

// log[alpha * 1{predicted == label} + (1 - alpha) * P_baseline(label)]
double observation_log_prob(bool predicted, bool label, const NoiseParams& noise);

double log_likelihood(const Concept& h, std::span<const Observation> evidence,
                      const NoiseParams& noise);

struct Hypothesis {
  Concept rule;
  double log_prior = 0;
  double log_likelihood = 0;
  double log_posterior = 0;
};

class PosteriorState {
 public:
  PosteriorState() = default;

  // Exact posterior over an enumerated support, before any evidence.
  static PosteriorState from_prior(std::span<const PriorHypothesis> support);
  // Empirical posterior from sampled (hypothesis, count) pairs; the
  // log-posterior of each entry is its log frequency.
  static PosteriorState from_counts(std::vector<Hypothesis> hypotheses,
                                    std::span<const std::size_t> counts);

  // Incremental Bayesian update with one labeled object.
  void observe(const Observation& obs, const NoiseParams& noise);
  void observe(std::span<const Observation> evidence, const NoiseParams& noise);

  const std::vector<Hypothesis>& hypotheses() const { return hypotheses_; }
  bool empty() const { return hypotheses_.empty(); }
  double log_normalizer() const { return log_z_; }
  // True when every hypothesis has zero likelihood; the posterior then falls
  // back to the prior.
  bool degenerate() const { return degenerate_; }
  double weight(std::size_t i) const;

 private:
  void renormalize();

  std::vector<Hypothesis> hypotheses_;
  std::vector<double> base_;  // unnormalized log weight before likelihood
  double log_z_ = 0;
  bool degenerate_ = false;
};

// P(label = True | evidence) = sum_h w_h [alpha 1{h(ctx)} + (1 - alpha) beta]
double posterior_predictive(const PosteriorState& state, const Context& ctx,
                            const NoiseParams& noise);

// True iff p > 0.5; exactly 0.5 is False.
inline bool classify(double p_true) { return p_true > 0.5; }
bool classify(const PosteriorState& state, const Context& ctx, const NoiseParams& noise);

// Highest log-posterior; ties go to the smaller concept, then to the
// lexicographically smaller printed form. Throws DataError when empty.
Concept map_rule(const PosteriorState& state, const FeatureVocab& vocab);

struct McmcOptions {
  std::size_t iterations = 100'000;
  std::size_t burn_in = 1'000;
  std::size_t max_size = 4;
  std::uint64_t seed = 0;
};

struct McmcResult {
  PosteriorState state;
  std::size_t accepted = 0;
  std::size_t proposals = 0;
};

// Metropolis-Hastings over derivation trees with subtree-regeneration
// proposals; the target is prior x likelihood restricted to concepts of at
// most max_size nodes.
McmcResult mh_sample(const Grammar& g, std::span<const Observation> evidence,
                     const NoiseParams& noise, const McmcOptions& options);

// Per-object P(True) along a list, each object conditioned on the gold
// labels of all earlier sets (feedback arrives after each set).
std::vector<double> predictive_trajectory(std::span<const PriorHypothesis> support,
                                          const ExemplarList& list, const NoiseParams& noise);

struct NoiseGrid {
  std::vector<double> alphas;
  std::vector<double> betas;

  // {0, step, 2 step, ..., 1} on both axes.
  static NoiseGrid lattice(double step);
};

struct TrainingList {
  const ExemplarList* list = nullptr;
  std::vector<std::optional<double>> human;  // per object proportion True
};

struct GridScore {
  NoiseParams noise;
  std::optional<double> r_squared;  // nullopt when undefined (zero variance)
};

struct NoiseFit {
  NoiseParams best;
  double r_squared = 0;
  std::vector<GridScore> scores;
};

// Grid search for the noise parameters whose posterior-predictive
// trajectories best correlate (R^2) with human proportions, pooled over the
// training lists. Ties go to the larger alpha, then the smaller beta.
NoiseFit fit_noise(std::span<const PriorHypothesis> support, std::span<const TrainingList> lists,
                   const NoiseGrid& grid);

}  // namespace conceptlab

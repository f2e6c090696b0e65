#pragma once

// Accuracy, correlation and rule-grading measures for comparing learners
// with human learning data.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conceptlab/exemplar.hpp"
#include "conceptlab/human.hpp"

namespace conceptlab {

// Exact count ratio; comparisons against 1.0 use the integers.
struct Fraction {
  std::size_t num = 0;
  std::size_t den = 0;

  double value() const { return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0; }
  bool is_one() const { return den > 0 && num == den; }
};

enum class Window { Overall, LastQuarter };

// One object of a (cohort member, rule) run in presentation order.
struct LabelRecord {
  std::size_t set_index = 0;
  std::size_t object_index = 0;
  bool gold = false;
  std::optional<bool> model;  // nullopt: excluded
  std::optional<double> p_true;
  std::optional<double> human;
};

using LabelSeries = std::vector<LabelRecord>;

// Throws DataError unless (set_index, object_index) strictly increase and
// probabilities lie in [0, 1].
void validate_series(const LabelSeries& series);

// ceil(n / 4)
std::size_t last_quarter_size(std::size_t n_objects);

// The window is taken over all objects first; excluded objects are then
// dropped from numerator and denominator.
Fraction accuracy_counts(const LabelSeries& series, Window window);
// Throws DataError when the window has no attempted objects.
double accuracy(const LabelSeries& series, Window window);
std::vector<Fraction> per_set_accuracy(const LabelSeries& series);

struct Correlation {
  double r = 0;
  double r_squared = 0;
  std::size_t n = 0;
};

// Squared Pearson correlation. Pairs with a missing human value are dropped.
// Throws DataError for fewer than 2 pairs or a constant vector.
Correlation r_squared(std::span<const double> model, std::span<const std::optional<double>> human);
Correlation r_squared(std::span<const double> model, std::span<const double> human);

// Share of observations whose gold label the concept reproduces.
Fraction rule_likelihood(const Concept& c, std::span<const Observation> evidence);

struct ConsistencyItem {
  Concept reported;
  Context context;
  bool model_label = false;
};

// Share of emitted labels that agree with the rule reported alongside them.
Fraction consistency(std::span<const ConsistencyItem> items);

struct FinalRule {
  std::string rule_id;
  std::optional<Concept> reported;  // nullopt: unparseable / missing
  const ExemplarList* list = nullptr;
};

struct MatchVerdict {
  std::string rule_id;
  Fraction likelihood;
  bool likelihood_match = false;
  std::optional<bool> equivalent;  // nullopt when the equivalence check ran out of budget
};

struct MatchSummary {
  std::vector<MatchVerdict> verdicts;
  double likelihood_match_rate = 0;
  double equivalence_match_rate = 0;
};

MatchSummary match_rate(std::span<const FinalRule> finals, const EquivalenceOptions& options = {});

// Expected accuracy of guessing True at rate p when True occurs at rate p.
double chance_baseline(double p);

struct BinaryDist {
  double p_true = 0;
  double p_false = 0;
};

struct CrossEntropy {
  double loss = 0;
  bool infinite = false;
};

// -sum_t P(t) ln Q(t) over t in {True, False}; summed across objects for
// the span overload.
CrossEntropy cross_entropy(const BinaryDist& target, const BinaryDist& model);
CrossEntropy cross_entropy(std::span<const BinaryDist> targets, std::span<const BinaryDist> models);

// Linear-interpolation quantile (q in [0, 1]).
double quantile(std::vector<double> values, double q);

struct Bands {
  double median = 0;
  double q25 = 0;
  double q75 = 0;
  double p20 = 0;
  double p10 = 0;
  double p01 = 0;
};

Bands bands(std::span<const double> values);

// Lowest percentile threshold (25, 20, 10, 1) the value falls below, or 0.
int band_below(const Bands& b, double value);

struct RuleCohort {
  std::string rule_id;
  std::vector<double> human_scores;
  std::optional<double> model_score;
};

struct RuleComparison {
  std::string rule_id;
  Bands human;
  std::optional<double> model;
  std::optional<double> delta;  // model - human median
  int band = 0;
};

struct CohortReport {
  std::vector<RuleComparison> rows;  // delta descending; rules without a model score last
  std::optional<double> model_bottom_quartile_rate;
  MeanSd subsample_bottom_quartile;  // one random human per rule, repeated
};

CohortReport cohort_report(std::span<const RuleCohort> cohorts, std::size_t subsamples,
                           std::uint64_t seed);

struct TrajectoryPoint {
  std::size_t set_index = 0;
  double mean_accuracy = 0;
  std::size_t members = 0;
  Bands bands;
};

struct TrajectoryReport {
  std::string cohort;
  std::vector<TrajectoryPoint> points;
  double chance = 0;
};

// Per-set mean accuracy across cohort members (each a series on the same
// list), with the chance baseline of the list's empirical True rate.
TrajectoryReport trajectory(const std::string& cohort, std::span<const LabelSeries> members,
                            const ExemplarList& list);

}  // namespace conceptlab

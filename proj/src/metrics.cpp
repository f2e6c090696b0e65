#include "conceptlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "conceptlab/error.hpp"
#include "conceptlab/random.hpp"

namespace conceptlab {

void validate_series(const LabelSeries& series) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& r = series[i];
    if (i > 0) {
      const auto& p = series[i - 1];
      if (std::pair{r.set_index, r.object_index} <= std::pair{p.set_index, p.object_index}) {
        throw DataError("label series out of presentation order at record " + std::to_string(i));
      }
    }
    for (auto v : {r.p_true, r.human}) {
      if (v && !(*v >= 0.0 && *v <= 1.0)) {
        throw DataError("probability outside [0,1] at record " + std::to_string(i));
      }
    }
  }
}

std::size_t last_quarter_size(std::size_t n_objects) { return (n_objects + 3) / 4; }

Fraction accuracy_counts(const LabelSeries& series, Window window) {
  std::size_t begin = 0;
  if (window == Window::LastQuarter) begin = series.size() - last_quarter_size(series.size());
  Fraction f;
  for (std::size_t i = begin; i < series.size(); ++i) {
    if (!series[i].model) continue;
    ++f.den;
    f.num += *series[i].model == series[i].gold;
  }
  return f;
}

double accuracy(const LabelSeries& series, Window window) {
  Fraction f = accuracy_counts(series, window);
  if (f.den == 0) throw DataError("accuracy window has no labeled objects");
  return f.value();
}

std::vector<Fraction> per_set_accuracy(const LabelSeries& series) {
  std::vector<Fraction> out;
  for (const auto& r : series) {
    if (r.set_index >= out.size()) out.resize(r.set_index + 1);
    if (!r.model) continue;
    ++out[r.set_index].den;
    out[r.set_index].num += *r.model == r.gold;
  }
  return out;
}

Correlation r_squared(std::span<const double> model, std::span<const std::optional<double>> human) {
  if (model.size() != human.size()) throw DataError("r_squared: vectors differ in length");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (!human[i]) continue;
    x.push_back(model[i]);
    y.push_back(*human[i]);
  }
  return r_squared(std::span<const double>(x), std::span<const double>(y));
}

Correlation r_squared(std::span<const double> model, std::span<const double> human) {
  if (model.size() != human.size()) throw DataError("r_squared: vectors differ in length");
  const std::size_t n = model.size();
  if (n < 2) throw DataError("r_squared needs at least two pairs");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += model[i];
    my += human[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = model[i] - mx, dy = human[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  // Rounding noise on a constant vector is not variance.
  const double floor = 1e-24 * static_cast<double>(n);
  if (sxx <= floor || syy <= floor) throw DataError("r_squared: zero variance");
  Correlation c;
  c.n = n;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  c.r_squared = c.r * c.r;
  return c;
}

Fraction rule_likelihood(const Concept& c, std::span<const Observation> evidence) {
  Fraction f{0, evidence.size()};
  for (const auto& obs : evidence) f.num += eval(c, obs.context) == obs.label;
  return f;
}

Fraction consistency(std::span<const ConsistencyItem> items) {
  Fraction f{0, items.size()};
  for (const auto& it : items) f.num += eval(it.reported, it.context) == it.model_label;
  return f;
}

MatchSummary match_rate(std::span<const FinalRule> finals, const EquivalenceOptions& options) {
  MatchSummary summary;
  std::size_t lik = 0, eq = 0;
  for (const auto& f : finals) {
    MatchVerdict v;
    v.rule_id = f.rule_id;
    if (f.reported && f.list) {
      v.likelihood = rule_likelihood(*f.reported, evidence_before(*f.list, f.list->sets.size()));
      v.likelihood_match = v.likelihood.is_one();
      try {
        v.equivalent = equivalent(*f.reported, f.list->rule, f.list->vocab, options);
      } catch (const BudgetExceeded&) {
        v.equivalent = std::nullopt;
      }
    } else {
      v.equivalent = false;
    }
    lik += v.likelihood_match;
    eq += v.equivalent.value_or(false);
    summary.verdicts.push_back(std::move(v));
  }
  if (!finals.empty()) {
    summary.likelihood_match_rate = static_cast<double>(lik) / static_cast<double>(finals.size());
    summary.equivalence_match_rate = static_cast<double>(eq) / static_cast<double>(finals.size());
  }
  return summary;
}

double chance_baseline(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DataError("chance_baseline: p outside [0,1]");
  // Same as p^2 + (1-p)^2; p - 0.5 is exact for most p, so decimal inputs
  // land on the nearest double.
  const double d = p - 0.5;
  return 0.5 + 2 * d * d;
}

CrossEntropy cross_entropy(const BinaryDist& target, const BinaryDist& model) {
  CrossEntropy ce;
  for (auto [p, q] : {std::pair{target.p_true, model.p_true}, std::pair{target.p_false, model.p_false}}) {
    if (p == 0) continue;
    if (q <= 0) {
      ce.infinite = true;
      ce.loss = std::numeric_limits<double>::infinity();
      return ce;
    }
    ce.loss -= p * std::log(q);
  }
  return ce;
}

CrossEntropy cross_entropy(std::span<const BinaryDist> targets, std::span<const BinaryDist> models) {
  if (targets.size() != models.size()) throw DataError("cross_entropy: length mismatch");
  CrossEntropy total;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    CrossEntropy ce = cross_entropy(targets[i], models[i]);
    if (ce.infinite) return ce;
    total.loss += ce.loss;
  }
  return total;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Bands bands(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  return {quantile(v, 0.5), quantile(v, 0.25), quantile(v, 0.75),
          quantile(v, 0.20), quantile(v, 0.10), quantile(v, 0.01)};
}

int band_below(const Bands& b, double value) {
  if (value < b.p01) return 1;
  if (value < b.p10) return 10;
  if (value < b.p20) return 20;
  if (value < b.q25) return 25;
  return 0;
}

CohortReport cohort_report(std::span<const RuleCohort> cohorts, std::size_t subsamples,
                           std::uint64_t seed) {
  CohortReport report;
  std::size_t with_model = 0, model_bottom = 0;
  for (const auto& c : cohorts) {
    if (c.human_scores.empty()) throw DataError("cohort for " + c.rule_id + " is empty");
    RuleComparison row;
    row.rule_id = c.rule_id;
    row.human = bands(c.human_scores);
    row.model = c.model_score;
    if (c.model_score) {
      row.delta = *c.model_score - row.human.median;
      row.band = band_below(row.human, *c.model_score);
      ++with_model;
      model_bottom += *c.model_score < row.human.q25;
    }
    report.rows.push_back(std::move(row));
  }
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const auto& a, const auto& b) {
    if (a.delta.has_value() != b.delta.has_value()) return a.delta.has_value();
    return a.delta && *a.delta > *b.delta;
  });
  if (with_model) {
    report.model_bottom_quartile_rate = static_cast<double>(model_bottom) / static_cast<double>(with_model);
  }
  if (subsamples > 0 && !cohorts.empty()) {
    std::vector<double> q25(cohorts.size());
    for (std::size_t i = 0; i < cohorts.size(); ++i) {
      q25[i] = quantile(cohorts[i].human_scores, 0.25);
    }
    Rng rng(seed);
    double sum = 0, sumsq = 0;
    for (std::size_t b = 0; b < subsamples; ++b) {
      std::size_t below = 0;
      for (std::size_t i = 0; i < cohorts.size(); ++i) {
        const auto& scores = cohorts[i].human_scores;
        below += scores[uniform_index(rng, scores.size())] < q25[i];
      }
      const double rate = static_cast<double>(below) / static_cast<double>(cohorts.size());
      sum += rate;
      sumsq += rate * rate;
    }
    const double n = static_cast<double>(subsamples);
    report.subsample_bottom_quartile.mean = sum / n;
    report.subsample_bottom_quartile.sd =
        subsamples > 1 ? std::sqrt(std::max(0.0, (sumsq - sum * sum / n) / (n - 1))) : 0.0;
  }
  return report;
}

TrajectoryReport trajectory(const std::string& cohort, std::span<const LabelSeries> members,
                            const ExemplarList& list) {
  TrajectoryReport rep;
  rep.cohort = cohort;
  std::size_t n_true = 0, n = 0;
  for (const auto& set : list.sets) {
    for (bool l : set.labels) {
      n_true += l;
      ++n;
    }
  }
  rep.chance = n ? chance_baseline(static_cast<double>(n_true) / static_cast<double>(n)) : 0.0;
  std::vector<std::vector<double>> by_set(list.sets.size());
  for (const auto& series : members) {
    auto per_set = per_set_accuracy(series);
    for (std::size_t s = 0; s < per_set.size() && s < by_set.size(); ++s) {
      if (per_set[s].den) by_set[s].push_back(per_set[s].value());
    }
  }
  for (std::size_t s = 0; s < by_set.size(); ++s) {
    if (by_set[s].empty()) continue;
    TrajectoryPoint pt;
    pt.set_index = s;
    pt.members = by_set[s].size();
    double sum = 0;
    for (double v : by_set[s]) sum += v;
    pt.mean_accuracy = sum / static_cast<double>(by_set[s].size());
    pt.bands = bands(by_set[s]);
    rep.points.push_back(pt);
  }
  return rep;
}

}  // namespace conceptlab

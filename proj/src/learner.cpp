#include "conceptlab/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "conceptlab/error.hpp"
#include "conceptlab/metrics.hpp"

namespace conceptlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Normalizes exp(x) in place into weights; returns log of the normalizer
// (-inf if every entry is -inf, in which case `fallback` is normalized
// instead).
double normalize_log_weights(std::span<const double> x, std::span<const double> fallback,
                             std::vector<double>& weights) {
  weights.resize(x.size());
  double m = kNegInf;
  for (double v : x) m = std::max(m, v);
  std::span<const double> src = x;
  double log_z = kNegInf;
  if (m == kNegInf) {
    src = fallback;
    for (double v : src) m = std::max(m, v);
  }
  double s = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    weights[i] = std::exp(src[i] - m);
    s += weights[i];
  }
  for (auto& w : weights) w /= s;
  if (src.data() == x.data()) log_z = m + std::log(s);
  return log_z;
}

}  // namespace

void NoiseParams::validate() const {
  if (!(alpha >= 0 && alpha <= 1) || !(beta >= 0 && beta <= 1)) {
    throw ConfigError("noise parameters must lie in [0,1]");
  }
}

double observation_log_prob(bool predicted, bool label, const NoiseParams& noise) {
  const double baseline = label ? noise.beta : 1 - noise.beta;
  return std::log(noise.alpha * (predicted == label ? 1.0 : 0.0) + (1 - noise.alpha) * baseline);
}

double log_likelihood(const Concept& h, std::span<const Observation> evidence,
                      const NoiseParams& noise) {
  double total = 0;
  for (const auto& obs : evidence) total += observation_log_prob(eval(h, obs.context), obs.label, noise);
  return total;
}

// ---- PosteriorState --------------------------------------------------------

PosteriorState PosteriorState::from_prior(std::span<const PriorHypothesis> support) {
  PosteriorState s;
  s.hypotheses_.reserve(support.size());
  for (const auto& h : support) s.hypotheses_.push_back({h.rule, h.log_prior, 0.0, 0.0});
  s.base_.reserve(support.size());
  for (const auto& h : support) s.base_.push_back(h.log_prior);
  s.renormalize();
  return s;
}

PosteriorState PosteriorState::from_counts(std::vector<Hypothesis> hypotheses,
                                           std::span<const std::size_t> counts) {
  if (hypotheses.size() != counts.size()) throw DataError("from_counts: size mismatch");
  PosteriorState s;
  s.hypotheses_ = std::move(hypotheses);
  double total = 0;
  for (auto c : counts) total += static_cast<double>(c);
  // base + log_likelihood reproduces the sampled frequencies, so further
  // observations reweight them correctly.
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double lf = std::log(static_cast<double>(counts[i]) / total);
    s.base_.push_back(std::isfinite(s.hypotheses_[i].log_likelihood)
                          ? lf - s.hypotheses_[i].log_likelihood
                          : lf);
  }
  s.renormalize();
  return s;
}

void PosteriorState::observe(const Observation& obs, const NoiseParams& noise) {
  for (auto& h : hypotheses_) {
    h.log_likelihood += observation_log_prob(eval(h.rule, obs.context), obs.label, noise);
  }
  renormalize();
}

void PosteriorState::observe(std::span<const Observation> evidence, const NoiseParams& noise) {
  for (const auto& obs : evidence) {
    for (auto& h : hypotheses_) {
      h.log_likelihood += observation_log_prob(eval(h.rule, obs.context), obs.label, noise);
    }
  }
  renormalize();
}

double PosteriorState::weight(std::size_t i) const {
  return std::exp(hypotheses_.at(i).log_posterior);
}

void PosteriorState::renormalize() {
  std::vector<double> x(hypotheses_.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = base_[i] + hypotheses_[i].log_likelihood;
  std::vector<double> w;
  log_z_ = normalize_log_weights(x, base_, w);
  degenerate_ = log_z_ == kNegInf && !x.empty();
  for (std::size_t i = 0; i < x.size(); ++i) {
    hypotheses_[i].log_posterior = degenerate_ ? std::log(w[i]) : x[i] - log_z_;
  }
}

double posterior_predictive(const PosteriorState& state, const Context& ctx,
                            const NoiseParams& noise) {
  double mass_true = 0, mass = 0;
  const auto& hs = state.hypotheses();
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const double w = std::exp(hs[i].log_posterior);
    mass += w;
    if (eval(hs[i].rule, ctx)) mass_true += w;
  }
  if (mass <= 0) return noise.beta;
  return noise.alpha * (mass_true / mass) + (1 - noise.alpha) * noise.beta;
}

bool classify(const PosteriorState& state, const Context& ctx, const NoiseParams& noise) {
  return classify(posterior_predictive(state, ctx, noise));
}

Concept map_rule(const PosteriorState& state, const FeatureVocab& vocab) {
  const auto& hs = state.hypotheses();
  if (hs.empty()) throw DataError("map_rule on an empty posterior");
  std::size_t best = 0;
  std::string best_text = to_string(hs[0].rule, vocab);
  for (std::size_t i = 1; i < hs.size(); ++i) {
    const double a = hs[i].log_posterior, b = hs[best].log_posterior;
    if (a > b + 1e-12) {
      best = i;
      best_text = to_string(hs[i].rule, vocab);
      continue;
    }
    if (a < b - 1e-12) continue;
    if (hs[i].rule.size() != hs[best].rule.size()) {
      if (hs[i].rule.size() < hs[best].rule.size()) {
        best = i;
        best_text = to_string(hs[i].rule, vocab);
      }
      continue;
    }
    std::string text = to_string(hs[i].rule, vocab);
    if (text < best_text) {
      best = i;
      best_text = std::move(text);
    }
  }
  return hs[best].rule;
}

// ---- Metropolis-Hastings ---------------------------------------------------

namespace {

struct Site {
  const Derivation* node = nullptr;
  std::size_t nt = 0;
};

Site locate(const Grammar& g, const Derivation& d, std::size_t nt, std::size_t k) {
  if (k == 0) return {&d, nt};
  --k;
  const auto& holes = g.production(d.production).holes;
  for (std::size_t i = 0; i < d.children.size(); ++i) {
    if (k < d.children[i].nodes) return locate(g, d.children[i], holes[i], k);
    k -= d.children[i].nodes;
  }
  throw DataError("derivation index out of range");
}

Derivation replace(const Grammar& g, const Derivation& d, std::size_t k, const Derivation& sub) {
  if (k == 0) return sub;
  --k;
  Derivation out;
  out.production = d.production;
  const auto& p = g.production(d.production);
  out.size = p.fixed_size;
  out.log_prob = p.log_prob;
  for (const auto& child : d.children) {
    if (k < child.nodes) {
      out.children.push_back(replace(g, child, k, sub));
      k = std::numeric_limits<std::size_t>::max();
    } else {
      if (k != std::numeric_limits<std::size_t>::max()) k -= child.nodes;
      out.children.push_back(child);
    }
    out.size += out.children.back().size;
    out.nodes += out.children.back().nodes;
    out.log_prob += out.children.back().log_prob;
  }
  return out;
}

}  // namespace

McmcResult mh_sample(const Grammar& g, std::span<const Observation> evidence,
                     const NoiseParams& noise, const McmcOptions& options) {
  if (options.iterations < 1) throw ConfigError("mh_sample needs at least one iteration");
  noise.validate();
  Rng rng(options.seed);

  std::unordered_map<std::string, double> lik_cache;
  auto score = [&](const Concept& c, const std::string& key) {
    auto it = lik_cache.find(key);
    if (it != lik_cache.end()) return it->second;
    double ll = log_likelihood(c, evidence, noise);
    lik_cache.emplace(key, ll);
    return ll;
  };

  std::optional<Derivation> init;
  for (int attempt = 0; attempt < 100'000 && !init; ++attempt) {
    init = sample_derivation(g, g.start(), options.max_size, rng);
  }
  if (!init) throw GrammarError("could not sample an initial hypothesis within max_size");

  Derivation current = std::move(*init);
  Concept current_concept = current.build(g);
  std::string current_key = to_string(current_concept, g.vocab());
  double current_ll = score(current_concept, current_key);

  struct Tally {
    Hypothesis h;
    std::size_t count = 0;
  };
  std::vector<Tally> tallies;
  std::unordered_map<std::string, std::size_t> index;

  McmcResult result;
  const std::size_t total = options.burn_in + options.iterations;
  for (std::size_t it = 0; it < total; ++it) {
    const std::size_t k = uniform_index(rng, current.nodes);
    Site site = locate(g, current, g.start(), k);
    const std::size_t budget = options.max_size - (current.size - site.node->size);
    ++result.proposals;
    if (auto sub = sample_derivation(g, site.nt, budget, rng)) {
      Derivation proposal = replace(g, current, k, *sub);
      Concept proposal_concept = proposal.build(g);
      std::string proposal_key = to_string(proposal_concept, g.vocab());
      const double proposal_ll = score(proposal_concept, proposal_key);
      double log_accept;
      if (current_ll == kNegInf) {
        log_accept = proposal_ll == kNegInf ? 0.0 : std::numeric_limits<double>::infinity();
      } else {
        log_accept = proposal_ll - current_ll + std::log(static_cast<double>(current.nodes)) -
                     std::log(static_cast<double>(proposal.nodes));
      }
      if (log_accept >= 0 || std::log(uniform_unit(rng)) < log_accept) {
        current = std::move(proposal);
        current_concept = std::move(proposal_concept);
        current_key = std::move(proposal_key);
        current_ll = proposal_ll;
        ++result.accepted;
      }
    }
    if (it < options.burn_in) continue;
    auto [pos, inserted] = index.try_emplace(current_key, tallies.size());
    if (inserted) tallies.push_back({{current_concept, current.log_prob, current_ll, 0.0}, 0});
    ++tallies[pos->second].count;
  }

  std::vector<Hypothesis> hs;
  std::vector<std::size_t> counts;
  for (auto& t : tallies) {
    hs.push_back(std::move(t.h));
    counts.push_back(t.count);
  }
  result.state = PosteriorState::from_counts(std::move(hs), counts);
  return result;
}

// ---- trajectories and noise fitting ----------------------------------------

std::vector<double> predictive_trajectory(std::span<const PriorHypothesis> support,
                                          const ExemplarList& list, const NoiseParams& noise) {
  PosteriorState state = PosteriorState::from_prior(support);
  std::vector<double> out;
  out.reserve(list.object_count());
  for (const auto& set : list.sets) {
    for (std::size_t i = 0; i < set.objects.size(); ++i) {
      out.push_back(posterior_predictive(state, set.context(i), noise));
    }
    std::vector<Observation> obs;
    for (std::size_t i = 0; i < set.objects.size(); ++i) obs.push_back({set.context(i), set.labels[i]});
    state.observe(obs, noise);
  }
  return out;
}

NoiseGrid NoiseGrid::lattice(double step) {
  if (!(step > 0 && step <= 1)) throw ConfigError("grid step must lie in (0,1]");
  NoiseGrid grid;
  const auto n = static_cast<std::size_t>(std::llround(1.0 / step));
  for (std::size_t i = 0; i <= n; ++i) {
    const double v = std::min(1.0, static_cast<double>(i) / static_cast<double>(n));
    grid.alphas.push_back(v);
    grid.betas.push_back(v);
  }
  return grid;
}

NoiseFit fit_noise(std::span<const PriorHypothesis> support, std::span<const TrainingList> lists,
                   const NoiseGrid& grid) {
  if (grid.alphas.empty() || grid.betas.empty()) throw ConfigError("noise grid is empty");
  if (support.empty()) throw ConfigError("fit_noise needs a non-empty hypothesis space");
  const std::size_t H = support.size();
  std::vector<double> prior(H);
  for (std::size_t h = 0; h < H; ++h) prior[h] = support[h].log_prior;

  // truth[l][obj * H + h]: does hypothesis h label object obj of list l True?
  std::vector<std::vector<std::uint8_t>> truth(lists.size());
  for (std::size_t l = 0; l < lists.size(); ++l) {
    const auto& list = *lists[l].list;
    if (lists[l].human.size() != list.object_count()) {
      throw DataError("human proportions misaligned with list " + list.rule_id);
    }
    auto& t = truth[l];
    t.resize(list.object_count() * H);
    std::size_t obj = 0;
    for (const auto& set : list.sets) {
      for (std::size_t i = 0; i < set.objects.size(); ++i, ++obj) {
        Context ctx = set.context(i);
        for (std::size_t h = 0; h < H; ++h) t[obj * H + h] = eval(support[h].rule, ctx);
      }
    }
  }

  NoiseFit fit;
  std::optional<double> best_r2;
  std::vector<double> loglik(H), x(H), w;
  for (double alpha : grid.alphas) {
    for (double beta : grid.betas) {
      NoiseParams noise{alpha, beta};
      double term[2][2];
      for (int pred = 0; pred < 2; ++pred) {
        for (int label = 0; label < 2; ++label) term[pred][label] = observation_log_prob(pred, label, noise);
      }
      std::vector<double> model, human;
      for (std::size_t l = 0; l < lists.size(); ++l) {
        const auto& list = *lists[l].list;
        const auto& t = truth[l];
        std::fill(loglik.begin(), loglik.end(), 0.0);
        std::size_t obj = 0;
        for (const auto& set : list.sets) {
          for (std::size_t h = 0; h < H; ++h) x[h] = prior[h] + loglik[h];
          normalize_log_weights(x, prior, w);
          const std::size_t first = obj;
          for (std::size_t i = 0; i < set.objects.size(); ++i, ++obj) {
            double mass_true = 0, mass = 0;
            for (std::size_t h = 0; h < H; ++h) {
              mass += w[h];
              if (t[obj * H + h]) mass_true += w[h];
            }
            if (auto hp = lists[l].human[obj]) {
              model.push_back(alpha * (mass_true / mass) + (1 - alpha) * beta);
              human.push_back(*hp);
            }
          }
          for (std::size_t i = 0; i < set.objects.size(); ++i) {
            const bool label = set.labels[i];
            for (std::size_t h = 0; h < H; ++h) loglik[h] += term[t[(first + i) * H + h]][label];
          }
        }
      }
      GridScore score{noise, std::nullopt};
      try {
        score.r_squared = r_squared(std::span<const double>(model), std::span<const double>(human)).r_squared;
      } catch (const DataError&) {
      }
      if (score.r_squared) {
        const bool better = !best_r2 || *score.r_squared > *best_r2 ||
                            (*score.r_squared == *best_r2 &&
                             (alpha > fit.best.alpha || (alpha == fit.best.alpha && beta < fit.best.beta)));
        if (better) {
          best_r2 = score.r_squared;
          fit.best = noise;
        }
      }
      fit.scores.push_back(score);
    }
  }
  if (!best_r2) {
    // Every grid point gave a constant trajectory; fall back to the first point.
    fit.best = {grid.alphas.front(), grid.betas.front()};
    fit.r_squared = 0;
  } else {
    fit.r_squared = *best_r2;
  }
  return fit;
}

}  // namespace conceptlab

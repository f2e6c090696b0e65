// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "conceptlab/error.hpp"
#include "conceptlab/experiment.hpp"
#include "conceptlab/human.hpp"
#include "conceptlab/io.hpp"
#include "conceptlab/learner.hpp"
#include "conceptlab/metrics.hpp"
#include "conceptlab/prompt.hpp"
#include "fake_model.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace conceptlab;
using conceptlab::testing::ScriptedTransport;

namespace {

const FeatureVocab kVocab;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Concept parse(const std::string& s) { return parse_concept(s, kVocab); }

// ---- 1 ----------------------------------------------------------------------

Outcome dsl_identities() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::vector<Concept> as, bs, bodies;
  for (int i = 0; i < 1000; ++i) {
    as.push_back(testing::random_concept(rng, kVocab, 9));
    bs.push_back(testing::random_concept(rng, kVocab, 9));
    bodies.push_back(testing::random_concept(rng, kVocab, 9, 1));
  }
  std::vector<Context> ctxs;
  for (int i = 0; i < 1000; ++i) ctxs.push_back(testing::random_context(rng, kVocab));

  auto N = [](Concept c) { return Concept::negate(std::move(c)); };
  auto B = [](NodeKind k, Concept a, Concept b) { return Concept::binary(k, std::move(a), std::move(b)); };
  std::size_t checks = 0, violations = 0;
  for (std::size_t i = 0; i < as.size(); ++i) {
    const Concept& a = as[i];
    const Concept& b = bs[i];
    const std::pair<Concept, Concept> pairs[] = {
        {N(B(NodeKind::And, a, b)), B(NodeKind::Or, N(a), N(b))},
        {N(B(NodeKind::Or, a, b)), B(NodeKind::And, N(a), N(b))},
        {B(NodeKind::Xor, a, b), N(B(NodeKind::Iff, a, b))},
        {B(NodeKind::Implies, a, b), B(NodeKind::Or, N(a), b)},
    };
    std::vector<std::pair<Concept, Concept>> all(std::begin(pairs), std::end(pairs));
    for (auto scope : {QuantScope::Others, QuantScope::All}) {
      const Concept& body = bodies[i];
      all.push_back({Concept::quant(QuantKind::ForAll, scope, body),
                     N(Concept::quant(QuantKind::Exists, scope, N(body)))});
      all.push_back({Concept::quant(QuantKind::Exists, scope, body),
                     N(Concept::quant(QuantKind::ForAll, scope, N(body)))});
    }
    for (const auto& ctx : ctxs) {
      for (const auto& [l, r] : all) {
        ++checks;
        violations += eval(l, ctx) != eval(r, ctx);
      }
    }
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < 30,
          std::to_string(checks) + " evaluations, " + std::to_string(violations) + " violations, " +
              fmt("%.1f s", secs)};
}

// ---- 2 ----------------------------------------------------------------------

Outcome equivalence_pairs() {
  const auto t0 = Clock::now();
  const std::pair<const char*, const char*> pairs[] = {
      {"(not (is-shape circle))", "(or (is-shape triangle) (is-shape rectangle))"},
      {"(or (is-shape circle) (is-color blue))",
       "(or (is-color blue) (and (or (is-color yellow) (is-color green)) (is-shape circle)))"},
      {"(or (is-color blue) (is-color green))", "(not (is-color yellow))"},
  };
  EquivalenceOptions opt;
  opt.max_set_size = 5;
  std::size_t ok = 0;
  for (const auto& [a, b] : pairs) ok += equivalent(parse(a), parse(b), kVocab, opt);
  // A near miss must still be told apart.
  const bool separates = !equivalent(parse("(or (is-shape circle) (is-color blue))"),
                                     parse("(or (is-color blue) (and (is-color yellow) (is-shape circle)))"),
                                     kVocab, opt);
  const double secs = seconds_since(t0);
  return {ok == 3 && separates && secs < 120,
          std::to_string(ok) + "/3 pairs equivalent, near miss separated: " + (separates ? "yes" : "no") +
              ", " + fmt("%.1f s", secs)};
}

// ---- 3 ----------------------------------------------------------------------

double tv_distance(const PosteriorState& a, const PosteriorState& b) {
  std::map<std::string, double> diff;
  for (std::size_t i = 0; i < a.hypotheses().size(); ++i) diff[to_string(a.hypotheses()[i].rule, kVocab)] += a.weight(i);
  for (std::size_t i = 0; i < b.hypotheses().size(); ++i) diff[to_string(b.hypotheses()[i].rule, kVocab)] -= b.weight(i);
  double tv = 0;
  for (const auto& [k, d] : diff) tv += std::abs(d);
  return tv / 2;
}

// Nonterminals named B are quantifier bodies (one bound variable in scope).
Grammar grammar_of(std::vector<std::tuple<std::string, std::string, double>> prods) {
  nlohmann::json j{{"nonterminals", {{{"name", "S"}, {"depth", 0}}}},
                   {"start", "S"},
                   {"productions", nlohmann::json::array()}};
  for (auto& [nt, t, w] : prods) {
    if (nt == "B" && j["nonterminals"].size() == 1) j["nonterminals"].push_back({{"name", "B"}, {"depth", 1}});
    j["productions"].push_back({nt, t, w});
  }
  return Grammar::from_json(j, kVocab);
}

Outcome learner_exactness() {
  struct Case {
    std::string name;
    Grammar g;
    std::size_t max_size;
    const char* rule;
  };
  std::vector<Case> cases{
      {"and-leaves",
       grammar_of({{"S", "(is-color blue)", 0.4}, {"S", "(is-shape circle)", 0.4}, {"S", "(and S S)", 0.2}}), 5,
       "(is-color blue)"},
      {"boolean",
       grammar_of({{"S", "(is-color blue)", 1},
                   {"S", "(is-color green)", 1},
                   {"S", "(is-shape circle)", 1},
                   {"S", "(is-size large)", 1},
                   {"S", "(not S)", 0.5},
                   {"S", "(or S S)", 0.5},
                   {"S", "(and S S)", 0.5}}),
       3, "(or (is-color blue) (is-shape circle))"},
      {"boolean-deep",
       grammar_of({{"S", "(is-color blue)", 1},
                   {"S", "(is-color green)", 1},
                   {"S", "(is-shape circle)", 1},
                   {"S", "(is-size large)", 1},
                   {"S", "(not S)", 0.5},
                   {"S", "(or S S)", 0.5},
                   {"S", "(and S S)", 0.5}}),
       4, "(and (is-size large) (not (is-shape circle)))"},
      {"quantified",
       grammar_of({{"S", "(is-color blue)", 1},
                   {"S", "(exists others B)", 0.5},
                   {"S", "(forall others B)", 0.5},
                   {"S", "(and S S)", 0.3},
                   {"B", "(same-color 0 1)", 1},
                   {"B", "(size-gt 0 1)", 1},
                   {"B", "(is-color blue 0)", 1}}),
       5, "(forall others (size-ge 1 0))"},
  };
  double worst_tv = 0, worst_inc = 0;
  std::size_t largest = 0;
  std::string failed, sizes;
  for (auto& c : cases) {
    auto support = enumerate_hypotheses(c.g, c.max_size);
    largest = std::max(largest, support.size());
    sizes += " " + c.name + "@" + std::to_string(c.max_size) + "=" + std::to_string(support.size());
    if (support.size() > 200) {
      failed += c.name + " has " + std::to_string(support.size()) + " hypotheses; ";
      continue;
    }
    ExemplarList list = generate_list(c.name, c.rule, parse(c.rule), kVocab, 3, 4);
    Evidence ev = evidence_before(list, list.sets.size());
    const NoiseParams noise{0.9, 0.5};

    auto exact = PosteriorState::from_prior(support);
    exact.observe(ev, noise);
    McmcOptions opt;
    opt.iterations = 100'000;
    opt.max_size = c.max_size;
    opt.seed = 11;
    auto mh = mh_sample(c.g, ev, noise, opt);
    worst_tv = std::max(worst_tv, tv_distance(mh.state, exact));

    // Batch: prior x full-evidence likelihood, normalized here.
    std::vector<double> logw;
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& h : support) {
      logw.push_back(h.log_prior + log_likelihood(h.rule, ev, noise));
      top = std::max(top, logw.back());
    }
    double z = 0;
    for (double l : logw) z += std::exp(l - top);
    auto inc = PosteriorState::from_prior(support);
    for (const auto& o : ev) inc.observe(o, noise);
    for (std::size_t i = 0; i < support.size(); ++i) {
      worst_inc = std::max(worst_inc, std::abs(inc.weight(i) - std::exp(logw[i] - top) / z));
    }
  }
  return {failed.empty() && worst_tv <= 0.05 && worst_inc <= 1e-9,
          failed + "supports" + sizes + ", worst" + " TV " + fmt("%.4f", worst_tv) +
              ", worst incremental/batch gap " + fmt("%.2e", worst_inc)};
}

// ---- 4 ----------------------------------------------------------------------

Outcome learnability() {
  const char* rules[] = {
      "(is-color blue)",
      "(is-shape circle)",
      "(is-size large)",
      "(not (is-color yellow))",
      "(not (is-shape triangle))",
      "(and (is-color blue) (is-shape circle))",
      "(or (is-shape circle) (is-size large))",
      "(and (is-size small) (not (is-color green)))",
      "(or (is-color green) (is-shape triangle))",
      "(implies (is-shape circle) (is-color blue))",
  };
  LearnerSettings settings;
  settings.alpha = 0.99;
  settings.beta = 0.5;
  Grammar g = Grammar::default_fol(kVocab);
  const auto t_support = Clock::now();
  auto support = enumerate_hypotheses(g, settings.max_size);
  const double support_secs = seconds_since(t_support);
  bool pass = true;
  double worst_acc = 1, slowest = 0;
  std::string misses;
  for (const char* src : rules) {
    const auto t0 = Clock::now();
    ExemplarList list = generate_list(src, src, parse(src), kVocab, derive_seed(2024, src), 25);
    PlotRun run = run_plot_rule(list, g, &support, settings, 0);
    LabelSeries series;
    for (const auto& r : run.rows) series.push_back(r.record);
    const double acc = accuracy(series, Window::LastQuarter);
    const double secs = seconds_since(t0) + support_secs;
    worst_acc = std::min(worst_acc, acc);
    slowest = std::max(slowest, secs);
    if (acc < 0.95 || secs >= 60) {
      pass = false;
      misses += std::string(" ") + src + "=" + fmt("%.3f", acc);
    }
  }
  return {pass, "10 rules, worst last-quarter accuracy " + fmt("%.3f", worst_acc) + ", slowest rule " +
                    fmt("%.2f s", slowest) + misses};
}

// ---- 5 ----------------------------------------------------------------------

Outcome noise_closed_forms() {
  auto all = enumerate_hypotheses(Grammar::default_fol(kVocab), 3);
  std::mt19937_64 rng(5);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  double worst_beta = 0, worst_map = 0;
  std::size_t states = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PriorHypothesis> support;
    for (int i = 0; i < 30; ++i) support.push_back(all[pick(all.size())]);
    const Concept& target = support[pick(support.size())].rule;
    Evidence ev;
    for (int i = 0; i < 40; ++i) {
      Context ctx = testing::random_context(rng, kVocab);
      ev.push_back({ctx, eval(target, ctx)});
    }
    // Drop rivals indistinguishable from the target so exactly one survives.
    std::vector<PriorHypothesis> pruned;
    bool kept_target = false;
    for (const auto& h : support) {
      const bool agrees = rule_likelihood(h.rule, ev).is_one();
      if (!agrees || (h.rule == target && !kept_target)) pruned.push_back(h);
      kept_target |= h.rule == target;
    }

    const double beta = std::uniform_real_distribution<double>(0, 1)(rng);
    auto noisy = PosteriorState::from_prior(pruned);
    noisy.observe(std::span(ev).first(pick(ev.size())), NoiseParams{0.7, 0.3});
    auto exact = PosteriorState::from_prior(pruned);
    exact.observe(ev, NoiseParams{1.0, beta});
    std::size_t alive = 0;
    for (std::size_t i = 0; i < exact.hypotheses().size(); ++i) alive += exact.weight(i) > 0;
    if (alive != 1) return {false, "trial " + std::to_string(trial) + " kept " + std::to_string(alive) + " hypotheses"};
    const Concept map = map_rule(exact, kVocab);
    for (int i = 0; i < 20; ++i) {
      Context ctx = testing::random_context(rng, kVocab);
      worst_beta = std::max(worst_beta, std::abs(posterior_predictive(noisy, ctx, {0.0, beta}) - beta));
      const double indicator = eval(map, ctx) ? 1.0 : 0.0;
      worst_map = std::max(worst_map, std::abs(posterior_predictive(exact, ctx, {1.0, beta}) - indicator));
    }
    ++states;
  }
  return {worst_beta <= 1e-12 && worst_map <= 1e-12,
          std::to_string(states) + " states, max |p - beta| at alpha 0: " + fmt("%.1e", worst_beta) +
              ", max |p - MAP| at alpha 1: " + fmt("%.1e", worst_map)};
}

// ---- 6 ----------------------------------------------------------------------

Outcome noise_recovery() {
  auto support = enumerate_hypotheses(Grammar::default_fol(kVocab), 3);
  const NoiseParams truth{0.8, 0.4};
  std::vector<ExemplarList> lists;
  for (const char* src : {"(is-color blue)", "(or (is-shape circle) (is-size large))",
                          "(exists others (same-color 0 1))", "(not (is-color yellow))"}) {
    lists.push_back(generate_list(src, src, parse(src), kVocab, 99, 25));
  }
  std::vector<TrainingList> train;
  for (const auto& l : lists) {
    auto p = predictive_trajectory(support, l, truth);
    train.push_back({&l, std::vector<std::optional<double>>(p.begin(), p.end())});
  }
  auto fit = fit_noise(support, train, NoiseGrid::lattice(0.05));
  const bool hit = std::abs(fit.best.alpha - 0.8) < 1e-9 && std::abs(fit.best.beta - 0.4) < 1e-9;
  return {hit, "recovered alpha " + fmt("%.2f", fit.best.alpha) + ", beta " + fmt("%.2f", fit.best.beta) +
                   ", R^2 " + fmt("%.6f", fit.r_squared) + " over " + std::to_string(fit.scores.size()) +
                   " grid points"};
}

// ---- 7 ----------------------------------------------------------------------

Outcome metric_oracles() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss;
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 3 + rng() % 60;
    std::vector<double> x(n), y(n);
    const double slope = gauss(rng);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = gauss(rng);
      y[i] = slope * x[i] + gauss(rng);
    }
    // Textbook single-pass formula, kept separate from the library's
    // centered two-pass one.
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sx += x[i];
      sy += y[i];
      sxx += x[i] * x[i];
      syy += y[i] * y[i];
      sxy += x[i] * y[i];
    }
    const double dn = static_cast<double>(n);
    const double r = (dn * sxy - sx * sy) / std::sqrt((dn * sxx - sx * sx) * (dn * syy - sy * sy));
    worst = std::max(worst, std::abs(r_squared(x, y).r_squared - r * r));
  }
  const double chance = chance_baseline(0.8);
  const double ce = cross_entropy(BinaryDist{0.5, 0.5}, BinaryDist{0.5, 0.5}).loss;
  const std::size_t window = last_quarter_size(75);
  const bool pass = worst <= 1e-9 && chance == 0.68 && std::abs(ce - std::log(2.0)) <= 1e-12 && window == 19;
  return {pass, "r^2 max error " + fmt("%.1e", worst) + ", chance(0.8) = " + fmt("%.17g", chance) +
                    ", fair-coin CE - ln 2 = " + fmt("%.1e", ce - std::log(2.0)) + ", last quarter of 75 = " +
                    std::to_string(window)};
}

// ---- 8 ----------------------------------------------------------------------

Outcome subject_filtering() {
  // Two objects per set over ten sets; subjects answer a prefix correctly.
  ExemplarList list = generate_list("r", "(is-color blue)", parse("(is-color blue)"), kVocab, 1, 0);
  for (int s = 0; s < 10; ++s) {
    list.sets.push_back({{*parse_object("small blue circle", kVocab), *parse_object("large green triangle", kVocab)},
                         {true, false}});
  }
  auto subject = [&](const std::string& id, std::size_t correct_of_20, std::size_t sets) {
    SubjectRecord rec{id, "r", {}, sets};
    for (std::size_t i = 0; i < 20; ++i) {
      const bool gold = i % 2 == 0;
      rec.responses.push_back(i < correct_of_20 ? gold : !gold);
    }
    return rec;
  };
  std::vector<SubjectRecord> recs;
  for (int i = 0; i < 9; ++i) recs.push_back(subject("s" + std::to_string(i), 18, 10));
  recs.push_back(subject("outlier", 2, 10));
  recs.push_back(subject("quit3", 20, 3));
  recs.push_back(subject("quit4", 1, 4));
  auto res = filter_subjects(recs, list);
  std::map<std::string, std::string> got;
  for (const auto& e : res.report.exclusions) got[e.subject_id] = e.reason;
  const std::map<std::string, std::string> want{
      {"outlier", "outlier-2sd"}, {"quit3", "min-sets"}, {"quit4", "min-sets"}};
  std::string listing;
  for (const auto& [id, reason] : got) listing += " " + id + ":" + reason;
  return {got == want && res.kept.size() == 9,
          "excluded" + listing + "; kept " + std::to_string(res.kept.size()) + "; pool mean " +
              fmt("%.3f", res.report.pool_mean) + ", sd " + fmt("%.4f", res.report.pool_sd)};
}

// ---- 9 ----------------------------------------------------------------------

EndpointConfig fake_endpoint(const std::string& api) {
  EndpointConfig c;
  c.name = "fake";
  c.base_url = "http://localhost:1/v1";
  c.model = "fake-1";
  c.api = api;
  c.backoff_ms = 0;
  return c;
}

Outcome harness_determinism() {
  std::string notes;
  bool pass = true;

  const auto fixture = testing::fixture_list();
  const std::pair<const char*, PromptBundle> goldens[] = {
      {"chat_set2.txt", build_prompt(fixture, 1, PromptMode::Chat)},
      {"elicitation_set2.txt", build_prompt(fixture, 1, PromptMode::ChatElicitation)},
      {"completion_set2_obj2.txt", build_prompt(fixture, 1, PromptMode::Completion, 1)},
  };
  std::size_t stable = 0;
  for (const auto& [name, bundle] : goldens) {
    const std::string path = std::string(CONCEPTLAB_GOLDEN_DIR) + "/" + name;
    stable += fs::exists(path) && read_file(path) == bundle.render();
  }
  pass &= stable == 3;
  notes += std::to_string(stable) + "/3 golden prompts identical";

  const auto dir = fs::temp_directory_path() / "conceptlab_acceptance_harness";
  fs::remove_all(dir);
  const ExemplarList list = generate_list("blue", "(is-color blue)", parse("(is-color blue)"), kVocab, 12, 25);
  ResponseCache cache((dir / "cache").string());
  for (auto mode : {PromptMode::Chat, PromptMode::Completion}) {
    const auto api = is_chat(mode) ? "chat" : "completion";
    ScriptedTransport cold_model(testing::keyword_model("blue"));
    LlmClient cold(fake_endpoint(api), cold_model, &cache);
    auto first = run_session(list, cold, mode, (dir / (std::string(api) + "1.json")).string());
    ScriptedTransport warm_model(testing::keyword_model("blue"));
    LlmClient warm(fake_endpoint(api), warm_model, &cache);
    auto second = run_session(list, warm, mode, (dir / (std::string(api) + "2.json")).string());
    const bool same = read_file((dir / (std::string(api) + "1.json")).string()) ==
                      read_file((dir / (std::string(api) + "2.json")).string());
    pass &= warm_model.calls == 0 && warm.stats().network_calls == 0 && same && cold_model.calls > 0;
    notes += std::string("; ") + api + " replay " + std::to_string(warm_model.calls) + " calls (cold " +
             std::to_string(cold_model.calls) + ")";
  }

  // Replies that mangle objects, abstain or answer with non-booleans.
  std::size_t n = 0;
  ScriptedTransport odd([&](const nlohmann::json& req) -> HttpResult {
    ++n;
    if (req.contains("prompt")) {
      const char* replies[] = {" maybe", "True", "\n", " FALSE ", " Tru", " false."};
      return {200, testing::completion_body(replies[n % 6], 0.5), ""};
    }
    std::vector<std::pair<std::string, std::string>> lines;
    std::size_t i = 0;
    for (const auto& l : testing::split_lines(req["messages"].back()["content"])) {
      if (l.rfind("- ", 0) != 0) continue;
      switch ((n + i++) % 4) {
        case 0: lines.push_back({l.substr(2), "True"}); break;
        case 1: lines.push_back({"huge purple hexagon", "False"}); break;
        case 2: lines.push_back({l.substr(2), "Unknown"}); break;
        default: break;
      }
    }
    return {200, testing::chat_body(lines, 0.5), ""};
  });
  for (auto mode : {PromptMode::Chat, PromptMode::Completion}) {
    LlmClient client(fake_endpoint(is_chat(mode) ? "chat" : "completion"), odd);
    auto t = run_session(list, client, mode);
    std::map<std::string, std::size_t> reasons;
    std::size_t labeled = 0, excluded = 0;
    for (const auto& s : t.sets) {
      for (const auto& o : s.objects) {
        if (o.label) {
          ++labeled;
        } else {
          ++excluded;
          ++reasons[o.reason];
        }
      }
    }
    const bool balanced = labeled + excluded == list.object_count() && labeled == t.labeled() &&
                          excluded == t.excluded() && excluded > 0 && labeled > 0;
    pass &= balanced;
    notes += "; " + std::string(prompt_mode_name(mode)) + " " + std::to_string(labeled) + " labeled + " +
             std::to_string(excluded) + " excluded = " + std::to_string(list.object_count());
    for (const auto& [r, c] : reasons) notes += " [" + r + " " + std::to_string(c) + "]";
  }
  fs::remove_all(dir);
  return {pass, notes};
}

// ---- 10 ---------------------------------------------------------------------

Outcome end_to_end() {
  const auto t0 = Clock::now();
  const auto dir = fs::temp_directory_path() / "conceptlab_acceptance_e2e";
  fs::remove_all(dir);
  fs::create_directories(dir);
  fs::copy_file(fs::path(CONCEPTLAB_DATA_DIR) / "rules12.txt", dir / "rules12.txt");
  write_file_atomic((dir / "experiment.json").string(),
                    nlohmann::json{{"seed", 20240401}, {"rules", "rules12.txt"}}.dump(2));
  auto cfg = ExperimentConfig::load((dir / "experiment.json").string());
  std::ostringstream log;
  int rc = cmd_gen(cfg, log);
  if (rc == kExitOk) rc = cmd_run(cfg, "plot", log);
  if (rc != kExitOk) return {false, "pipeline stopped with exit code " + std::to_string(rc) + ": " + log.str()};

  std::string finals;
  const auto manifest = cfg.load_rules();
  for (const auto& r : manifest.rules) {
    std::istringstream in(read_file(cfg.out("map/plot/" + r.id + ".tsv")));
    std::string line, last;
    while (std::getline(in, line)) {
      if (!line.empty()) last = line;
    }
    finals += last + "\n";
  }
  write_file_atomic(cfg.out("map_final.tsv"), finals);
  rc = cmd_grade(cfg, cfg.out("map_final.tsv"), cfg.out("series/plot"), log);
  if (rc == kExitOk) rc = cmd_report(cfg, log);
  if (rc != kExitOk) return {false, "grade/report exit code " + std::to_string(rc)};
  const double secs = seconds_since(t0);

  const std::string table = read_file(cfg.out("report/table1.csv"));
  const auto header = split_csv_line(table.substr(0, table.find('\n')));
  auto has = [&](const std::string& col) { return std::find(header.begin(), header.end(), col) != header.end(); };
  const bool shaped = has("prop_overall") && has("prop_last_quarter") && has("fol_overall") &&
                      has("fol_last_quarter") && table.find("\nplot,12,6,6,") != std::string::npos;
  auto summary = nlohmann::json::parse(read_file(cfg.out("grade/map_final/summary.json")));
  const double match = summary["likelihood_match_rate"];
  fs::remove_all(dir);
  return {shaped && secs < 600, std::to_string(manifest.rules.size()) + " rules, table1 columns " +
                                    (shaped ? "ok" : "missing") + ", final MAP match rate " + fmt("%.3f", match) +
                                    ", " + fmt("%.1f s", secs)};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"DSL identities", dsl_identities},
      {"equivalence pairs", equivalence_pairs},
      {"learner exactness", learner_exactness},
      {"learnability", learnability},
      {"noise closed forms", noise_closed_forms},
      {"noise recovery", noise_recovery},
      {"metric oracles", metric_oracles},
      {"subject filtering", subject_filtering},
      {"harness determinism", harness_determinism},
      {"end-to-end dry run", end_to_end},
  };
  int failures = 0, index = 0;
  for (const auto& [name, check] : criteria) {
    ++index;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << index << " (" << name << "): " << o.detail
              << std::endl;
  }
  return failures ? 1 : 0;
}

#include <cmath>
#include <map>
#include <set>

#include "conceptlab/error.hpp"
#include "conceptlab/grammar.hpp"
#include "doctest.h"

using namespace conceptlab;

namespace {

const FeatureVocab kVocab;

Grammar two_leaves(bool with_and) {
  nlohmann::json j = nlohmann::json::array();
  j.push_back({"S", "(is-color blue)", with_and ? 0.4 : 0.5});
  j.push_back({"S", "(is-shape circle)", with_and ? 0.4 : 0.5});
  if (with_and) j.push_back({"S", "(and S S)", 0.2});
  return Grammar::from_json(j, kVocab);
}

double total_mass(const std::vector<PriorHypothesis>& hs) {
  double s = 0;
  for (const auto& h : hs) s += std::exp(h.log_prior);
  return s;
}

}  // namespace

TEST_CASE("two leaves give two hypotheses at ln 0.5") {
  auto hs = enumerate_hypotheses(two_leaves(false), 1);
  REQUIRE(hs.size() == 2);
  for (const auto& h : hs) CHECK(h.log_prior == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(total_mass(hs) == doctest::Approx(1.0));
}

TEST_CASE("binary and over two leaves") {
  Grammar g = two_leaves(true);
  auto hs = enumerate_hypotheses(g, 3);
  CHECK(hs.size() == 6);
  std::map<std::string, double> prior;
  for (const auto& h : hs) prior[to_string(h.rule, kVocab)] = h.log_prior;
  CHECK(prior.at("(is-color blue)") == doctest::Approx(std::log(0.4)));
  CHECK(prior.at("(and (is-color blue) (is-shape circle))") ==
        doctest::Approx(std::log(0.2 * 0.4 * 0.4)));
  // 0.8 + 4 * 0.032 < 1: mass is lost to larger concepts.
  CHECK(total_mass(hs) == doctest::Approx(0.928));
  CHECK(enumerate_hypotheses(g, 2).size() == 2);
}

TEST_CASE("duplicate derivations sum their probability") {
  nlohmann::json j = nlohmann::json::array();
  j.push_back({"S", "(is-color blue)", 1.0});
  j.push_back({"S", "T", 1.0});
  j.push_back({"T", "(is-color blue)", 1.0});
  auto hs = enumerate_hypotheses(Grammar::from_json(j, kVocab), 1);
  REQUIRE(hs.size() == 1);
  CHECK(hs[0].log_prior == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("enumeration cap and bad grammars") {
  Grammar g = Grammar::default_fol(kVocab);
  CHECK_THROWS_AS(enumerate_hypotheses(g, 4, 100), BudgetExceeded);

  nlohmann::json cycle = nlohmann::json::array();
  cycle.push_back({"S", "T", 1.0});
  cycle.push_back({"T", "S", 1.0});
  cycle.push_back({"T", "(is-color blue)", 1.0});
  CHECK_THROWS_AS(Grammar::from_json(cycle, kVocab), GrammarError);

  nlohmann::json unknown = nlohmann::json::array();
  unknown.push_back({"S", "(not Q)", 1.0});
  CHECK_THROWS_AS(Grammar::from_json(unknown, kVocab), GrammarError);

  // A depth-0 nonterminal cannot sit under a quantifier.
  nlohmann::json depth = nlohmann::json::array();
  depth.push_back({"S", "(exists others S)", 1.0});
  depth.push_back({"S", "(is-color blue)", 1.0});
  CHECK_THROWS_AS(Grammar::from_json(depth, kVocab), GrammarError);
}

TEST_CASE("default grammars") {
  Grammar fol = Grammar::default_fol(kVocab);
  auto small = enumerate_hypotheses(fol, 2);
  std::set<std::string> printed;
  for (const auto& h : small) {
    CHECK(size(h.rule) <= 2);
    CHECK_NOTHROW(check_well_formed(h.rule, kVocab));
    CHECK(printed.insert(to_string(h.rule, kVocab)).second);
  }
  CHECK(printed.count("(is-shape circle)") == 1);
  CHECK(printed.count("(not (is-color blue))") == 1);
  CHECK(printed.count("(majority-color)") == 1);
  CHECK(total_mass(small) < 1.0);

  auto fol3 = enumerate_hypotheses(fol, 3);
  bool has_quantifier = false;
  for (const auto& h : fol3) has_quantifier |= h.rule.kind() == NodeKind::Quant;
  CHECK(has_quantifier);

  auto prop = enumerate_hypotheses(Grammar::default_propositional(kVocab), 3);
  for (const auto& h : prop) CHECK(is_propositional(h.rule));
}

TEST_CASE("grammar json round trip") {
  Grammar g = Grammar::default_fol(kVocab);
  Grammar back = Grammar::from_json(g.to_json(), kVocab);
  auto a = enumerate_hypotheses(g, 3);
  auto b = enumerate_hypotheses(back, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].rule == b[i].rule);
    CHECK(a[i].log_prior == doctest::Approx(b[i].log_prior).epsilon(1e-12));
  }
}

TEST_CASE("sampled derivations respect the bound and match their prior") {
  Grammar g = two_leaves(true);
  auto hs = enumerate_hypotheses(g, 3);
  std::map<std::string, double> prior;
  for (const auto& h : hs) prior[to_string(h.rule, kVocab)] = h.log_prior;
  Rng rng(5);
  int hits = 0;
  for (int i = 0; i < 2000; ++i) {
    auto d = sample_derivation(g, g.start(), 3, rng);
    if (!d) continue;
    ++hits;
    Concept c = d->build(g);
    CHECK(size(c) == d->size);
    CHECK(size(c) <= 3);
    // No duplicates in this grammar, so the derivation probability is the prior.
    CHECK(d->log_prob == doctest::Approx(prior.at(to_string(c, kVocab))));
  }
  CHECK(hits > 1500);
}

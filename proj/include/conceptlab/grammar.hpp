#pragma once

// Probabilistic grammars over concepts. Each production rewrites a
// nonterminal into a concept template whose holes are other nonterminals,
// e.g. BOOL -> (and BOOL BOOL). Nonterminals declare how many quantified
// variables are in scope (`depth`), which makes templates like
// (same-color 0 1) legal inside quantifier bodies.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "conceptlab/concept.hpp"
#include "conceptlab/random.hpp"
#include "json.hpp"

namespace conceptlab {

struct NonterminalDecl {
  std::string name;
  std::size_t depth = 0;
};

struct ProductionSpec {
  std::string nonterminal;
  std::string template_text;
  double weight = 1.0;
};

class Grammar {
 public:
  struct Production {
    std::size_t lhs = 0;
    std::string text;
    Concept tmpl = Concept::hole(0);
    std::vector<std::size_t> holes;  // nonterminal ids, preorder
    std::size_t fixed_size = 0;      // nodes contributed by the template itself
    double weight = 0;
    double log_prob = 0;  // log(weight / sum of lhs weights)
  };

  Grammar(FeatureVocab vocab, std::vector<NonterminalDecl> nonterminals, std::string start,
          const std::vector<ProductionSpec>& productions);

  // Every connective, both quantifier scopes over a one-variable body,
  // majority/minority, and all feature tests, with uniform weights per
  // nonterminal.
  static Grammar default_fol(const FeatureVocab& vocab);
  // Boolean connectives over the target's features only.
  static Grammar default_propositional(const FeatureVocab& vocab);

  static Grammar from_json(const nlohmann::json& j, const FeatureVocab& vocab);
  static Grammar load(const std::string& path, const FeatureVocab& vocab);
  nlohmann::json to_json() const;

  const FeatureVocab& vocab() const { return vocab_; }
  std::size_t start() const { return start_; }
  std::size_t nonterminal_count() const { return nonterminals_.size(); }
  const NonterminalDecl& nonterminal(std::size_t id) const { return nonterminals_.at(id); }
  const std::vector<std::size_t>& productions_of(std::size_t nt) const { return by_lhs_.at(nt); }
  const Production& production(std::size_t i) const { return productions_.at(i); }
  std::size_t production_count() const { return productions_.size(); }

 private:
  void check_unit_cycles() const;

  FeatureVocab vocab_;
  std::vector<NonterminalDecl> nonterminals_;
  std::size_t start_ = 0;
  std::vector<Production> productions_;
  std::vector<std::vector<std::size_t>> by_lhs_;
};

struct PriorHypothesis {
  Concept rule;
  double log_prior = 0;
};

// Every distinct concept derivable from the start symbol with at most
// `max_size` nodes. A concept reachable through several derivations appears
// once with their summed probability. Order: by size, then derivation order.
// Throws BudgetExceeded when more than `cap` derivations would be built.
std::vector<PriorHypothesis> enumerate_hypotheses(const Grammar& g, std::size_t max_size,
                                                  std::size_t cap = 5'000'000);

// A derivation tree: which production was used at each node.
struct Derivation {
  std::size_t production = 0;
  std::vector<Derivation> children;
  std::size_t size = 0;     // concept nodes in this subtree
  std::size_t nodes = 1;    // derivation nodes in this subtree
  double log_prob = 0;      // sum of production log-probabilities

  Concept build(const Grammar& g) const;
};

// Samples a derivation of `nt` from the grammar, giving up (nullopt) as soon
// as the concept would exceed `max_size` nodes.
std::optional<Derivation> sample_derivation(const Grammar& g, std::size_t nt,
                                            std::size_t max_size, Rng& rng);

}  // namespace conceptlab

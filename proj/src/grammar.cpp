#include "conceptlab/grammar.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <unordered_map>

#include "conceptlab/error.hpp"
#include "conceptlab/io.hpp"

namespace conceptlab {

namespace {

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void collect_holes(const Concept& c, std::vector<std::size_t>& out) {
  if (c.kind() == NodeKind::Hole) {
    out.push_back(c.hole_id());
    return;
  }
  for (std::size_t i = 0; i < c.arity(); ++i) collect_holes(c.operand(i), out);
}

}  // namespace

Grammar::Grammar(FeatureVocab vocab, std::vector<NonterminalDecl> nonterminals, std::string start,
                 const std::vector<ProductionSpec>& productions)
    : vocab_(std::move(vocab)), nonterminals_(std::move(nonterminals)) {
  std::map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < nonterminals_.size(); ++i) {
    if (!ids.emplace(nonterminals_[i].name, i).second) {
      throw GrammarError("duplicate nonterminal " + nonterminals_[i].name);
    }
  }
  auto start_it = ids.find(start);
  if (start_it == ids.end()) throw GrammarError("unknown start symbol " + start);
  start_ = start_it->second;
  if (nonterminals_[start_].depth != 0) throw GrammarError("start symbol must have depth 0");

  by_lhs_.assign(nonterminals_.size(), {});
  for (const auto& spec : productions) {
    auto lhs = ids.find(spec.nonterminal);
    if (lhs == ids.end()) throw GrammarError("production for unknown nonterminal " + spec.nonterminal);
    if (!(spec.weight > 0) || !std::isfinite(spec.weight)) {
      throw GrammarError("production weight must be positive: " + spec.template_text);
    }
    ParseOptions opts;
    opts.base_depth = nonterminals_[lhs->second].depth;
    opts.hole = [&](std::string_view name, std::size_t depth,
                    std::size_t pos) -> std::optional<std::uint32_t> {
      auto it = ids.find(std::string(name));
      if (it == ids.end()) return std::nullopt;
      if (nonterminals_[it->second].depth != depth) {
        throw ParseError("nonterminal " + it->first + " (depth " +
                             std::to_string(nonterminals_[it->second].depth) +
                             ") used at binder depth " + std::to_string(depth),
                         pos);
      }
      return static_cast<std::uint32_t>(it->second);
    };
    Production p;
    p.lhs = lhs->second;
    p.text = spec.template_text;
    p.weight = spec.weight;
    try {
      SExpr e = read_sexpr(spec.template_text);
      // A bare nonterminal is a unit production.
      if (!e.is_list) {
        auto id = opts.hole(e.atom, opts.base_depth, e.position);
        if (!id) throw ParseError("unknown nonterminal '" + e.atom + "'", e.position);
        p.tmpl = Concept::hole(*id);
      } else {
        p.tmpl = concept_from_sexpr(e, vocab_, opts);
      }
    } catch (const ParseError& err) {
      throw GrammarError("bad template '" + spec.template_text + "': " + err.what());
    }
    collect_holes(p.tmpl, p.holes);
    p.fixed_size = p.tmpl.size();
    by_lhs_[p.lhs].push_back(productions_.size());
    productions_.push_back(std::move(p));
  }
  for (std::size_t nt = 0; nt < nonterminals_.size(); ++nt) {
    if (by_lhs_[nt].empty()) throw GrammarError("nonterminal " + nonterminals_[nt].name + " has no productions");
    double total = 0;
    for (auto i : by_lhs_[nt]) total += productions_[i].weight;
    for (auto i : by_lhs_[nt]) productions_[i].log_prob = std::log(productions_[i].weight / total);
  }
  check_unit_cycles();
}

// Enumeration and sampling both rely on every cycle consuming at least one
// concept node.
void Grammar::check_unit_cycles() const {
  std::vector<int> state(nonterminals_.size(), 0);
  std::function<void(std::size_t)> visit = [&](std::size_t nt) {
    if (state[nt] == 2) return;
    if (state[nt] == 1) throw GrammarError("unit-production cycle through " + nonterminals_[nt].name);
    state[nt] = 1;
    for (auto i : by_lhs_[nt]) {
      const auto& p = productions_[i];
      if (p.fixed_size == 0 && p.holes.size() == 1) visit(p.holes[0]);
    }
    state[nt] = 2;
  };
  for (std::size_t nt = 0; nt < nonterminals_.size(); ++nt) visit(nt);
}

Grammar Grammar::default_fol(const FeatureVocab& vocab) {
  std::vector<ProductionSpec> p;
  auto add = [&](const std::string& nt, const std::string& t) { p.push_back({nt, t, 1.0}); };
  for (const char* op : {"and", "or", "xor", "implies", "iff"}) {
    add("BOOL", std::string("(") + op + " BOOL BOOL)");
  }
  add("BOOL", "(not BOOL)");
  add("BOOL", "FEATURE");
  for (const char* q : {"exists", "forall", "exactly-one"}) {
    for (const char* scope : {"others", "all"}) {
      add("BOOL", std::string("(") + q + " " + scope + " BODY)");
    }
  }
  add("BOOL", "(majority-color)");
  add("BOOL", "(minority-color)");
  for (auto d : {Dimension::Size, Dimension::Color, Dimension::Shape}) {
    for (const auto& v : vocab.values(d)) {
      add("FEATURE", "(is-" + std::string(dimension_name(d)) + " " + v + ")");
      add("BOUND_FEATURE", "(is-" + std::string(dimension_name(d)) + " " + v + " 0)");
    }
  }
  for (const char* op : {"and", "or", "implies"}) add("BODY", std::string("(") + op + " BODY BODY)");
  add("BODY", "(not BODY)");
  add("BODY", "BOUND_FEATURE");
  add("BODY", "RELATION");
  for (const char* r : {"same-color 0 1", "same-shape 0 1", "same-size 0 1", "size-gt 0 1",
                        "size-gt 1 0", "size-ge 0 1", "size-ge 1 0"}) {
    add("RELATION", std::string("(") + r + ")");
  }
  return Grammar(vocab,
                 {{"BOOL", 0}, {"FEATURE", 0}, {"BODY", 1}, {"BOUND_FEATURE", 1}, {"RELATION", 1}},
                 "BOOL", p);
}

Grammar Grammar::default_propositional(const FeatureVocab& vocab) {
  std::vector<ProductionSpec> p;
  for (const char* op : {"and", "or", "xor", "implies", "iff"}) {
    p.push_back({"BOOL", std::string("(") + op + " BOOL BOOL)", 1.0});
  }
  p.push_back({"BOOL", "(not BOOL)", 1.0});
  p.push_back({"BOOL", "FEATURE", 1.0});
  for (auto d : {Dimension::Size, Dimension::Color, Dimension::Shape}) {
    for (const auto& v : vocab.values(d)) {
      p.push_back({"FEATURE", "(is-" + std::string(dimension_name(d)) + " " + v + ")", 1.0});
    }
  }
  return Grammar(vocab, {{"BOOL", 0}, {"FEATURE", 0}}, "BOOL", p);
}

Grammar Grammar::from_json(const nlohmann::json& j, const FeatureVocab& vocab) {
  try {
    const nlohmann::json& prods = j.is_array() ? j : j.at("productions");
    std::vector<ProductionSpec> specs;
    for (const auto& e : prods) {
      if (e.is_array()) {
        specs.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>(), e.at(2).get<double>()});
      } else {
        specs.push_back({e.at("nonterminal").get<std::string>(), e.at("template").get<std::string>(),
                         e.value("weight", 1.0)});
      }
    }
    if (specs.empty()) throw GrammarError("grammar has no productions");
    std::vector<NonterminalDecl> decls;
    std::map<std::string, bool> declared;
    if (j.is_object() && j.contains("nonterminals")) {
      for (const auto& d : j.at("nonterminals")) {
        decls.push_back({d.at("name").get<std::string>(), d.value("depth", std::size_t{0})});
        declared[decls.back().name] = true;
      }
    }
    for (const auto& s : specs) {
      if (!declared[s.nonterminal]) {
        decls.push_back({s.nonterminal, 0});
        declared[s.nonterminal] = true;
      }
    }
    std::string start = j.is_object() && j.contains("start") ? j.at("start").get<std::string>()
                                                              : specs.front().nonterminal;
    return Grammar(vocab, decls, start, specs);
  } catch (const nlohmann::json::exception& e) {
    throw GrammarError(std::string("grammar json: ") + e.what());
  }
}

Grammar Grammar::load(const std::string& path, const FeatureVocab& vocab) {
  try {
    return from_json(nlohmann::json::parse(read_file(path)), vocab);
  } catch (const nlohmann::json::parse_error& e) {
    throw GrammarError(path + ": " + e.what());
  }
}

nlohmann::json Grammar::to_json() const {
  nlohmann::json nts = nlohmann::json::array();
  for (const auto& d : nonterminals_) nts.push_back({{"name", d.name}, {"depth", d.depth}});
  nlohmann::json prods = nlohmann::json::array();
  for (const auto& p : productions_) {
    prods.push_back({{"nonterminal", nonterminals_[p.lhs].name}, {"template", p.text}, {"weight", p.weight}});
  }
  return {{"start", nonterminals_[start_].name}, {"nonterminals", nts}, {"productions", prods}};
}

// ---- enumeration -----------------------------------------------------------

namespace {

class Enumerator {
 public:
  Enumerator(const Grammar& g, std::size_t cap) : g_(g), cap_(cap) {}

  const std::vector<PriorHypothesis>& of(std::size_t nt, std::size_t size) {
    auto key = std::pair{nt, size};
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    std::vector<PriorHypothesis> out;
    for (auto pi : g_.productions_of(nt)) {
      const auto& p = g_.production(pi);
      if (p.holes.empty()) {
        if (p.fixed_size == size) out.push_back({p.tmpl, p.log_prob});
        continue;
      }
      if (size < p.fixed_size + p.holes.size()) continue;
      std::vector<std::size_t> parts(p.holes.size(), 1);
      fill(p, 0, size - p.fixed_size, parts, out);
    }
    built_ += out.size();
    if (built_ > cap_) {
      throw BudgetExceeded("hypothesis enumeration exceeded cap of " + std::to_string(cap_));
    }
    return memo_.emplace(key, std::move(out)).first->second;
  }

 private:
  // Distributes `remaining` nodes across holes [i, k) and emits the products.
  void fill(const Grammar::Production& p, std::size_t i, std::size_t remaining,
            std::vector<std::size_t>& parts, std::vector<PriorHypothesis>& out) {
    const std::size_t k = p.holes.size();
    if (i + 1 == k) {
      parts[i] = remaining;
      emit(p, parts, out);
      return;
    }
    for (std::size_t s = 1; s + (k - i - 1) <= remaining; ++s) {
      parts[i] = s;
      fill(p, i + 1, remaining - s, parts, out);
    }
  }

  void emit(const Grammar::Production& p, const std::vector<std::size_t>& parts,
            std::vector<PriorHypothesis>& out) {
    const std::size_t k = p.holes.size();
    std::vector<const std::vector<PriorHypothesis>*> lists(k);
    for (std::size_t i = 0; i < k; ++i) {
      // Copy the pointer before recursing again: `of` may rehash the memo,
      // but element addresses of an unordered_map are stable.
      lists[i] = &of(p.holes[i], parts[i]);
      if (lists[i]->empty()) return;
    }
    std::vector<std::size_t> idx(k, 0);
    std::vector<Concept> fillers;
    fillers.reserve(k);
    for (;;) {
      fillers.clear();
      double lp = p.log_prob;
      for (std::size_t i = 0; i < k; ++i) {
        const auto& h = (*lists[i])[idx[i]];
        fillers.push_back(h.rule);
        lp += h.log_prior;
      }
      out.push_back({substitute_holes(p.tmpl, fillers), lp});
      if (built_ + out.size() > cap_) {
        throw BudgetExceeded("hypothesis enumeration exceeded cap of " + std::to_string(cap_));
      }
      std::size_t pos = k;
      while (pos > 0) {
        --pos;
        if (++idx[pos] < lists[pos]->size()) break;
        idx[pos] = 0;
        if (pos == 0) return;
      }
    }
  }

  struct KeyHash {
    std::size_t operator()(const std::pair<std::size_t, std::size_t>& k) const {
      return k.first * 1315423911u ^ k.second;
    }
  };

  const Grammar& g_;
  std::size_t cap_;
  std::size_t built_ = 0;
  std::unordered_map<std::pair<std::size_t, std::size_t>, std::vector<PriorHypothesis>, KeyHash> memo_;
};

}  // namespace

std::vector<PriorHypothesis> enumerate_hypotheses(const Grammar& g, std::size_t max_size,
                                                  std::size_t cap) {
  if (max_size < 1) throw ConfigError("max_size must be at least 1");
  Enumerator en(g, cap);
  std::vector<PriorHypothesis> out;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t s = 1; s <= max_size; ++s) {
    for (const auto& h : en.of(g.start(), s)) {
      auto [it, inserted] = index.try_emplace(to_string(h.rule, g.vocab()), out.size());
      if (inserted) {
        out.push_back(h);
      } else {
        out[it->second].log_prior = log_sum_exp(out[it->second].log_prior, h.log_prior);
      }
    }
  }
  return out;
}

// ---- derivations -----------------------------------------------------------

Concept Derivation::build(const Grammar& g) const {
  const auto& p = g.production(production);
  if (children.empty()) return p.tmpl;
  std::vector<Concept> fillers;
  fillers.reserve(children.size());
  for (const auto& c : children) fillers.push_back(c.build(g));
  return substitute_holes(p.tmpl, fillers);
}

std::optional<Derivation> sample_derivation(const Grammar& g, std::size_t nt, std::size_t max_size,
                                            Rng& rng) {
  const auto& options = g.productions_of(nt);
  double u = uniform_unit(rng);
  std::size_t chosen = options.back();
  for (auto pi : options) {
    u -= std::exp(g.production(pi).log_prob);
    if (u < 0) {
      chosen = pi;
      break;
    }
  }
  const auto& p = g.production(chosen);
  Derivation d;
  d.production = chosen;
  d.size = p.fixed_size;
  d.log_prob = p.log_prob;
  if (d.size + p.holes.size() > max_size) return std::nullopt;
  for (std::size_t i = 0; i < p.holes.size(); ++i) {
    const std::size_t reserved = p.holes.size() - i - 1;
    auto child = sample_derivation(g, p.holes[i], max_size - d.size - reserved, rng);
    if (!child) return std::nullopt;
    d.size += child->size;
    d.nodes += child->nodes;
    d.log_prob += child->log_prob;
    d.children.push_back(std::move(*child));
  }
  if (d.size == 0 || d.size > max_size) return std::nullopt;
  return d;
}

}  // namespace conceptlab

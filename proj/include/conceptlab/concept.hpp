#pragma once

// The concept language: an immutable AST of logical rules over the objects
// of a Context, with an s-expression concrete syntax.
//
// Variables are de Bruijn indices. At the top level the only variable is the
// target object (index 0). Each quantifier binds one fresh variable, which
// becomes index 0 inside its body; the target then becomes index 1, and so on.
//
//   (is-color blue)                        target is blue
//   (xor (is-shape circle) (is-color blue))
//   (exists others (and (same-shape 0 1) (is-color yellow 0)))
//                                          same shape as another, yellow object
//   (forall others (size-ge 1 0))          one of the largest
//   (exactly-one all (is-color blue 0))    exactly one blue object in the set
//
// Quantifier scope `others` skips the target's position; `all` ranges over
// every position including the target.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "conceptlab/sexpr.hpp"
#include "conceptlab/vocab.hpp"

namespace conceptlab {

enum class NodeKind : std::uint8_t {
  Feature,
  Not,
  And,
  Or,
  Xor,
  Implies,
  Iff,
  Quant,
  Rel,
  Majority,
  Minority,
  Hole,  // grammar templates only; never appears in a well-formed concept
};

enum class QuantKind : std::uint8_t { Exists, ForAll, ExactlyOne };
enum class QuantScope : std::uint8_t { Others, All };
enum class RelKind : std::uint8_t { SameColor, SameShape, SameSize, SizeGt, SizeGe };

class Concept {
 public:
  struct Node {
    NodeKind kind = NodeKind::Feature;
    Dimension dim = Dimension::Size;
    std::uint8_t value = 0;
    QuantKind quant = QuantKind::Exists;
    QuantScope scope = QuantScope::Others;
    RelKind rel = RelKind::SameColor;
    std::uint8_t var_a = 0;
    std::uint8_t var_b = 0;
    std::uint32_t hole = 0;
    std::uint32_t size = 1;
    std::uint32_t depth = 1;
    std::shared_ptr<const Node> lhs;
    std::shared_ptr<const Node> rhs;
  };

  static Concept feature(Dimension dim, std::uint8_t value, std::uint8_t var = 0);
  static Concept negate(Concept operand);
  // kind must be one of And, Or, Xor, Implies, Iff.
  static Concept binary(NodeKind kind, Concept lhs, Concept rhs);
  static Concept quant(QuantKind kind, QuantScope scope, Concept body);
  static Concept rel(RelKind kind, std::uint8_t a, std::uint8_t b);
  static Concept majority(std::uint8_t var = 0);
  static Concept minority(std::uint8_t var = 0);
  static Concept hole(std::uint32_t id);

  NodeKind kind() const { return node_->kind; }
  Dimension dimension() const { return node_->dim; }
  std::uint8_t value() const { return node_->value; }
  std::uint8_t var() const { return node_->var_a; }
  std::uint8_t var2() const { return node_->var_b; }
  QuantKind quant_kind() const { return node_->quant; }
  QuantScope scope() const { return node_->scope; }
  RelKind rel_kind() const { return node_->rel; }
  std::uint32_t hole_id() const { return node_->hole; }

  // Child count: 0 for leaves, 1 for Not/Quant, 2 for binary connectives.
  std::size_t arity() const;
  Concept operand(std::size_t i) const;

  // Node count and maximum nesting (a leaf has size 1, depth 1).
  std::size_t size() const { return node_->size; }
  std::size_t depth() const { return node_->depth; }

  const Node& node() const { return *node_; }

  friend bool operator==(const Concept& a, const Concept& b);

 private:
  explicit Concept(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  static Concept make(Node n);

  std::shared_ptr<const Node> node_;
};

inline std::size_t size(const Concept& c) { return c.size(); }
inline std::size_t depth(const Concept& c) { return c.depth(); }

std::string to_string(const Concept& c, const FeatureVocab& vocab);

struct ParseOptions {
  // Number of variables already bound around the parsed text, beyond the
  // target. Grammar templates for quantifier bodies parse with depth >= 1.
  std::size_t base_depth = 0;
  // Maps an atom to a template hole id. Called with the binder depth at the
  // atom's position; returning nullopt means "not a hole".
  std::function<std::optional<std::uint32_t>(std::string_view name, std::size_t depth,
                                              std::size_t position)>
      hole;
};

// Throws ParseError (syntax, unknown feature value, unbound variable).
Concept parse_concept(std::string_view text, const FeatureVocab& vocab,
                      const ParseOptions& options = {});
Concept concept_from_sexpr(const SExpr& e, const FeatureVocab& vocab,
                           const ParseOptions& options = {});

// Replaces Hole nodes, in preorder, with `fillers`.
Concept substitute_holes(const Concept& tmpl, std::span<const Concept> fillers);
std::size_t hole_count(const Concept& c);

// Largest variable index that escapes the outermost binder, i.e. the number
// of enclosing variables `c` needs (0 means only the target). Returns -1 for
// a closed leaf-free concept, which cannot occur for valid input.
int free_depth(const Concept& c);

// Throws DataError when `c` contains holes, unbound variables, or feature
// values outside `vocab`.
void check_well_formed(const Concept& c, const FeatureVocab& vocab);

// True when the concept only inspects the target's own features.
bool is_propositional(const Concept& c);

bool eval(const Concept& c, const Context& ctx);

// Calls `visit` once per canonical context: every multiset of 1..max_set_size
// objects from the vocab's universe with every distinct choice of target.
// The target is placed at position 0. Throws BudgetExceeded before visiting
// anything when the count would exceed `cap`.
std::size_t count_contexts(const FeatureVocab& vocab, std::size_t max_set_size);
void for_each_context(const FeatureVocab& vocab, std::size_t max_set_size, std::size_t cap,
                      const std::function<bool(const Context&)>& visit);

struct EquivalenceOptions {
  std::size_t max_set_size = 5;
  std::size_t context_cap = 5'000'000;
};

std::optional<Context> find_counterexample(const Concept& a, const Concept& b,
                                           const FeatureVocab& vocab,
                                           const EquivalenceOptions& options = {});
bool equivalent(const Concept& a, const Concept& b, const FeatureVocab& vocab,
                const EquivalenceOptions& options = {});

}  // namespace conceptlab

#include "conceptlab/concept.hpp"

#include <algorithm>
#include <array>
#include <charconv>

#include "conceptlab/error.hpp"

namespace conceptlab {

namespace {

using NodePtr = std::shared_ptr<const Concept::Node>;

bool is_binary(NodeKind k) {
  return k == NodeKind::And || k == NodeKind::Or || k == NodeKind::Xor ||
         k == NodeKind::Implies || k == NodeKind::Iff;
}

bool same_node(const Concept::Node& a, const Concept::Node& b) {
  if (&a == &b) return true;
  if (a.kind != b.kind || a.size != b.size) return false;
  switch (a.kind) {
    case NodeKind::Feature:
      return a.dim == b.dim && a.value == b.value && a.var_a == b.var_a;
    case NodeKind::Not:
      return same_node(*a.lhs, *b.lhs);
    case NodeKind::Quant:
      return a.quant == b.quant && a.scope == b.scope && same_node(*a.lhs, *b.lhs);
    case NodeKind::Rel:
      return a.rel == b.rel && a.var_a == b.var_a && a.var_b == b.var_b;
    case NodeKind::Majority:
    case NodeKind::Minority:
      return a.var_a == b.var_a;
    case NodeKind::Hole:
      return a.hole == b.hole;
    default:
      return same_node(*a.lhs, *b.lhs) && same_node(*a.rhs, *b.rhs);
  }
}

std::string_view binary_name(NodeKind k) {
  switch (k) {
    case NodeKind::And: return "and";
    case NodeKind::Or: return "or";
    case NodeKind::Xor: return "xor";
    case NodeKind::Implies: return "implies";
    case NodeKind::Iff: return "iff";
    default: return "?";
  }
}

std::string_view quant_name(QuantKind k) {
  switch (k) {
    case QuantKind::Exists: return "exists";
    case QuantKind::ForAll: return "forall";
    case QuantKind::ExactlyOne: return "exactly-one";
  }
  return "?";
}

std::string_view rel_name(RelKind k) {
  switch (k) {
    case RelKind::SameColor: return "same-color";
    case RelKind::SameShape: return "same-shape";
    case RelKind::SameSize: return "same-size";
    case RelKind::SizeGt: return "size-gt";
    case RelKind::SizeGe: return "size-ge";
  }
  return "?";
}

void print(const Concept::Node& n, const FeatureVocab& vocab, std::string& out) {
  auto var_suffix = [&](std::uint8_t v) {
    if (v != 0) {
      out += ' ';
      out += std::to_string(v);
    }
  };
  switch (n.kind) {
    case NodeKind::Feature:
      out += "(is-";
      out += dimension_name(n.dim);
      out += ' ';
      out += vocab.values(n.dim).at(n.value);
      var_suffix(n.var_a);
      out += ')';
      return;
    case NodeKind::Not:
      out += "(not ";
      print(*n.lhs, vocab, out);
      out += ')';
      return;
    case NodeKind::Quant:
      out += '(';
      out += quant_name(n.quant);
      out += n.scope == QuantScope::Others ? " others " : " all ";
      print(*n.lhs, vocab, out);
      out += ')';
      return;
    case NodeKind::Rel:
      out += '(';
      out += rel_name(n.rel);
      out += ' ' + std::to_string(n.var_a) + ' ' + std::to_string(n.var_b) + ')';
      return;
    case NodeKind::Majority:
    case NodeKind::Minority:
      out += n.kind == NodeKind::Majority ? "(majority-color" : "(minority-color";
      var_suffix(n.var_a);
      out += ')';
      return;
    case NodeKind::Hole:
      out += '?' + std::to_string(n.hole);
      return;
    default:
      out += '(';
      out += binary_name(n.kind);
      out += ' ';
      print(*n.lhs, vocab, out);
      out += ' ';
      print(*n.rhs, vocab, out);
      out += ')';
      return;
  }
}

// ---- parsing ---------------------------------------------------------------

class Parser {
 public:
  Parser(const FeatureVocab& vocab, const ParseOptions& options)
      : vocab_(vocab), options_(options) {}

  Concept parse(const SExpr& e, std::size_t depth) {
    if (!e.is_list) {
      if (options_.hole) {
        if (auto id = options_.hole(e.atom, depth, e.position)) return Concept::hole(*id);
      }
      throw ParseError("expected '(' but found '" + e.atom + "'", e.position);
    }
    if (e.items.empty()) throw ParseError("empty list", e.position);
    const SExpr& head = e.items.front();
    if (head.is_list) throw ParseError("operator must be a symbol", head.position);
    const std::string& op = head.atom;
    const std::size_t nargs = e.items.size() - 1;

    if (op == "is-size" || op == "is-color" || op == "is-shape") {
      Dimension dim = op == "is-size"    ? Dimension::Size
                      : op == "is-color" ? Dimension::Color
                                         : Dimension::Shape;
      if (nargs != 1 && nargs != 2) arity_error(e, "1 or 2");
      const SExpr& val = e.items[1];
      if (val.is_list) throw ParseError("expected a feature value", val.position);
      auto idx = vocab_.find(dim, val.atom);
      if (!idx) {
        throw ParseError("unknown feature value '" + val.atom + "' for " +
                             std::string(dimension_name(dim)),
                         val.position);
      }
      std::uint8_t var = nargs == 2 ? variable(e.items[2], depth) : 0;
      return Concept::feature(dim, *idx, var);
    }
    if (op == "not") {
      if (nargs != 1) arity_error(e, "1");
      return Concept::negate(parse(e.items[1], depth));
    }
    if (op == "and" || op == "or") {
      if (nargs < 2) arity_error(e, "at least 2");
      NodeKind k = op == "and" ? NodeKind::And : NodeKind::Or;
      // n-ary sugar nests to the right.
      Concept acc = parse(e.items.back(), depth);
      for (std::size_t i = e.items.size() - 2; i >= 1; --i) {
        acc = Concept::binary(k, parse(e.items[i], depth), std::move(acc));
      }
      return acc;
    }
    if (op == "xor" || op == "implies" || op == "iff") {
      if (nargs != 2) arity_error(e, "2");
      NodeKind k = op == "xor" ? NodeKind::Xor : op == "implies" ? NodeKind::Implies : NodeKind::Iff;
      return Concept::binary(k, parse(e.items[1], depth), parse(e.items[2], depth));
    }
    if (op == "exists" || op == "forall" || op == "exactly-one") {
      if (nargs != 2) arity_error(e, "2 (scope, body)");
      QuantKind k = op == "exists"   ? QuantKind::Exists
                    : op == "forall" ? QuantKind::ForAll
                                     : QuantKind::ExactlyOne;
      const SExpr& sc = e.items[1];
      QuantScope scope;
      if (!sc.is_list && sc.atom == "others") {
        scope = QuantScope::Others;
      } else if (!sc.is_list && sc.atom == "all") {
        scope = QuantScope::All;
      } else {
        throw ParseError("quantifier scope must be 'others' or 'all'", sc.position);
      }
      return Concept::quant(k, scope, parse(e.items[2], depth + 1));
    }
    static constexpr std::array<std::pair<std::string_view, RelKind>, 5> kRels{{
        {"same-color", RelKind::SameColor},
        {"same-shape", RelKind::SameShape},
        {"same-size", RelKind::SameSize},
        {"size-gt", RelKind::SizeGt},
        {"size-ge", RelKind::SizeGe},
    }};
    for (const auto& [name, kind] : kRels) {
      if (op == name) {
        if (nargs != 2) arity_error(e, "2");
        return Concept::rel(kind, variable(e.items[1], depth), variable(e.items[2], depth));
      }
    }
    if (op == "majority-color" || op == "minority-color") {
      if (nargs > 1) arity_error(e, "0 or 1");
      std::uint8_t var = nargs == 1 ? variable(e.items[1], depth) : 0;
      return op == "majority-color" ? Concept::majority(var) : Concept::minority(var);
    }
    throw ParseError("unknown operator '" + op + "'", head.position);
  }

 private:
  std::uint8_t variable(const SExpr& e, std::size_t depth) {
    if (e.is_list) throw ParseError("expected a variable index", e.position);
    unsigned value = 0;
    const char* first = e.atom.data();
    const char* last = first + e.atom.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
      throw ParseError("expected a variable index, found '" + e.atom + "'", e.position);
    }
    if (value > depth) {
      throw ParseError("unbound variable " + e.atom + " (only " + std::to_string(depth + 1) +
                           " in scope)",
                       e.position);
    }
    return static_cast<std::uint8_t>(value);
  }

  [[noreturn]] void arity_error(const SExpr& e, const char* expected) {
    throw ParseError("'" + e.items.front().atom + "' expects " + expected + " argument(s)",
                     e.position);
  }

  const FeatureVocab& vocab_;
  const ParseOptions& options_;
};

// ---- evaluation ------------------------------------------------------------

struct Env {
  std::array<std::uint8_t, 16> slots{};
  std::size_t n = 0;
  std::size_t at(std::uint8_t var) const { return slots[n - 1 - var]; }
};

bool eval_node(const Concept::Node& node, const Context& ctx, Env& env) {
  switch (node.kind) {
    case NodeKind::Feature:
      return ctx[env.at(node.var_a)].get(node.dim) == node.value;
    case NodeKind::Not:
      return !eval_node(*node.lhs, ctx, env);
    case NodeKind::And:
      return eval_node(*node.lhs, ctx, env) && eval_node(*node.rhs, ctx, env);
    case NodeKind::Or:
      return eval_node(*node.lhs, ctx, env) || eval_node(*node.rhs, ctx, env);
    case NodeKind::Xor:
      return eval_node(*node.lhs, ctx, env) != eval_node(*node.rhs, ctx, env);
    case NodeKind::Implies:
      return !eval_node(*node.lhs, ctx, env) || eval_node(*node.rhs, ctx, env);
    case NodeKind::Iff:
      return eval_node(*node.lhs, ctx, env) == eval_node(*node.rhs, ctx, env);
    case NodeKind::Quant: {
      if (env.n == env.slots.size()) throw DataError("quantifier nesting too deep");
      std::size_t hits = 0;
      bool result = node.quant == QuantKind::ForAll;
      for (std::size_t p = 0; p < ctx.size(); ++p) {
        if (node.scope == QuantScope::Others && p == ctx.target()) continue;
        env.slots[env.n++] = static_cast<std::uint8_t>(p);
        bool b = eval_node(*node.lhs, ctx, env);
        --env.n;
        if (node.quant == QuantKind::Exists && b) return true;
        if (node.quant == QuantKind::ForAll && !b) return false;
        if (node.quant == QuantKind::ExactlyOne && b && ++hits > 1) return false;
      }
      if (node.quant == QuantKind::ExactlyOne) return hits == 1;
      return result;
    }
    case NodeKind::Rel: {
      const Obj& a = ctx[env.at(node.var_a)];
      const Obj& b = ctx[env.at(node.var_b)];
      switch (node.rel) {
        case RelKind::SameColor: return a.color == b.color;
        case RelKind::SameShape: return a.shape == b.shape;
        case RelKind::SameSize: return a.size == b.size;
        case RelKind::SizeGt: return a.size > b.size;
        case RelKind::SizeGe: return a.size >= b.size;
      }
      return false;
    }
    case NodeKind::Majority:
    case NodeKind::Minority: {
      std::array<int, 256> counts{};
      for (const Obj& o : ctx.objects()) ++counts[o.color];
      const std::uint8_t own = ctx[env.at(node.var_a)].color;
      bool others_present = false;
      for (const Obj& o : ctx.objects()) {
        if (o.color == own) continue;
        others_present = true;
        if (node.kind == NodeKind::Majority && counts[own] <= counts[o.color]) return false;
        if (node.kind == NodeKind::Minority && counts[own] >= counts[o.color]) return false;
      }
      // A single-color set has a majority color but no minority color.
      return node.kind == NodeKind::Majority || others_present;
    }
    case NodeKind::Hole:
      throw DataError("cannot evaluate a template hole");
  }
  return false;
}

int free_depth_node(const Concept::Node& n) {
  switch (n.kind) {
    case NodeKind::Feature:
    case NodeKind::Majority:
    case NodeKind::Minority:
      return n.var_a;
    case NodeKind::Rel:
      return std::max(n.var_a, n.var_b);
    case NodeKind::Hole:
      return -1;
    case NodeKind::Not:
      return free_depth_node(*n.lhs);
    case NodeKind::Quant:
      return free_depth_node(*n.lhs) - 1;
    default:
      return std::max(free_depth_node(*n.lhs), free_depth_node(*n.rhs));
  }
}

void check_node(const Concept::Node& n, const FeatureVocab& vocab) {
  switch (n.kind) {
    case NodeKind::Hole:
      throw DataError("concept contains an unfilled template hole");
    case NodeKind::Feature:
      if (n.value >= vocab.cardinality(n.dim)) {
        throw DataError("feature value index out of range for " +
                        std::string(dimension_name(n.dim)));
      }
      return;
    case NodeKind::Rel:
    case NodeKind::Majority:
    case NodeKind::Minority:
      return;
    case NodeKind::Not:
    case NodeKind::Quant:
      check_node(*n.lhs, vocab);
      return;
    default:
      check_node(*n.lhs, vocab);
      check_node(*n.rhs, vocab);
  }
}

Concept substitute(const Concept& c, std::span<const Concept> fillers, std::size_t& next) {
  switch (c.kind()) {
    case NodeKind::Hole:
      if (next >= fillers.size()) throw GrammarError("too few fillers for template");
      return fillers[next++];
    case NodeKind::Not:
      return Concept::negate(substitute(c.operand(0), fillers, next));
    case NodeKind::Quant:
      return Concept::quant(c.quant_kind(), c.scope(), substitute(c.operand(0), fillers, next));
    case NodeKind::And:
    case NodeKind::Or:
    case NodeKind::Xor:
    case NodeKind::Implies:
    case NodeKind::Iff: {
      Concept l = substitute(c.operand(0), fillers, next);
      Concept r = substitute(c.operand(1), fillers, next);
      return Concept::binary(c.kind(), std::move(l), std::move(r));
    }
    default:
      return c;
  }
}

}  // namespace

// ---- Concept ---------------------------------------------------------------

Concept Concept::make(Node n) {
  std::uint32_t sz = 1;
  std::uint32_t dp = 1;
  if (n.lhs) {
    sz += n.lhs->size;
    dp = std::max(dp, n.lhs->depth + 1);
  }
  if (n.rhs) {
    sz += n.rhs->size;
    dp = std::max(dp, n.rhs->depth + 1);
  }
  if (n.kind == NodeKind::Hole) sz = 0, dp = 0;
  n.size = sz;
  n.depth = dp;
  return Concept(std::make_shared<const Node>(std::move(n)));
}

Concept Concept::feature(Dimension dim, std::uint8_t value, std::uint8_t var) {
  Node n;
  n.kind = NodeKind::Feature;
  n.dim = dim;
  n.value = value;
  n.var_a = var;
  return make(std::move(n));
}

Concept Concept::negate(Concept operand) {
  Node n;
  n.kind = NodeKind::Not;
  n.lhs = std::move(operand.node_);
  return make(std::move(n));
}

Concept Concept::binary(NodeKind kind, Concept lhs, Concept rhs) {
  if (!is_binary(kind)) throw DataError("not a binary connective");
  Node n;
  n.kind = kind;
  n.lhs = std::move(lhs.node_);
  n.rhs = std::move(rhs.node_);
  return make(std::move(n));
}

Concept Concept::quant(QuantKind kind, QuantScope scope, Concept body) {
  Node n;
  n.kind = NodeKind::Quant;
  n.quant = kind;
  n.scope = scope;
  n.lhs = std::move(body.node_);
  return make(std::move(n));
}

Concept Concept::rel(RelKind kind, std::uint8_t a, std::uint8_t b) {
  Node n;
  n.kind = NodeKind::Rel;
  n.rel = kind;
  n.var_a = a;
  n.var_b = b;
  return make(std::move(n));
}

Concept Concept::majority(std::uint8_t var) {
  Node n;
  n.kind = NodeKind::Majority;
  n.var_a = var;
  return make(std::move(n));
}

Concept Concept::minority(std::uint8_t var) {
  Node n;
  n.kind = NodeKind::Minority;
  n.var_a = var;
  return make(std::move(n));
}

Concept Concept::hole(std::uint32_t id) {
  Node n;
  n.kind = NodeKind::Hole;
  n.hole = id;
  return make(std::move(n));
}

std::size_t Concept::arity() const {
  if (node_->rhs) return 2;
  if (node_->lhs) return 1;
  return 0;
}

Concept Concept::operand(std::size_t i) const {
  const auto& child = i == 0 ? node_->lhs : node_->rhs;
  if (!child) throw DataError("operand index out of range");
  return Concept(child);
}

bool operator==(const Concept& a, const Concept& b) { return same_node(*a.node_, *b.node_); }

// ---- free functions --------------------------------------------------------

std::string to_string(const Concept& c, const FeatureVocab& vocab) {
  std::string out;
  print(c.node(), vocab, out);
  return out;
}

Concept concept_from_sexpr(const SExpr& e, const FeatureVocab& vocab,
                           const ParseOptions& options) {
  return Parser(vocab, options).parse(e, options.base_depth);
}

Concept parse_concept(std::string_view text, const FeatureVocab& vocab,
                      const ParseOptions& options) {
  return concept_from_sexpr(read_sexpr(text), vocab, options);
}

Concept substitute_holes(const Concept& tmpl, std::span<const Concept> fillers) {
  std::size_t next = 0;
  Concept out = substitute(tmpl, fillers, next);
  if (next != fillers.size()) throw GrammarError("too many fillers for template");
  return out;
}

std::size_t hole_count(const Concept& c) {
  if (c.kind() == NodeKind::Hole) return 1;
  std::size_t n = 0;
  for (std::size_t i = 0; i < c.arity(); ++i) n += hole_count(c.operand(i));
  return n;
}

int free_depth(const Concept& c) { return free_depth_node(c.node()); }

void check_well_formed(const Concept& c, const FeatureVocab& vocab) {
  check_node(c.node(), vocab);
  if (free_depth(c) > 0) throw DataError("concept has an unbound variable");
}

bool is_propositional(const Concept& c) {
  switch (c.kind()) {
    case NodeKind::Feature:
      return c.var() == 0;
    case NodeKind::Quant:
    case NodeKind::Rel:
    case NodeKind::Majority:
    case NodeKind::Minority:
    case NodeKind::Hole:
      return false;
    default:
      for (std::size_t i = 0; i < c.arity(); ++i) {
        if (!is_propositional(c.operand(i))) return false;
      }
      return true;
  }
}

bool eval(const Concept& c, const Context& ctx) {
  Env env;
  env.slots[0] = static_cast<std::uint8_t>(ctx.target());
  env.n = 1;
  return eval_node(c.node(), ctx, env);
}

namespace {

std::size_t multisets(std::size_t n, std::size_t k) {
  // C(n + k - 1, k)
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n + i - 1) / i;
  return r;
}

}  // namespace

std::size_t count_contexts(const FeatureVocab& vocab, std::size_t max_set_size) {
  const std::size_t u = vocab.universe_size();
  std::size_t total = 0;
  for (std::size_t others = 0; others < max_set_size; ++others) total += multisets(u, others);
  return total * u;
}

void for_each_context(const FeatureVocab& vocab, std::size_t max_set_size, std::size_t cap,
                      const std::function<bool(const Context&)>& visit) {
  if (max_set_size < 1 || max_set_size > kMaxSetSize) {
    throw ConfigError("max_set_size must be in 1.." + std::to_string(kMaxSetSize));
  }
  const std::size_t total = count_contexts(vocab, max_set_size);
  if (total > cap) {
    throw BudgetExceeded("context enumeration needs " + std::to_string(total) +
                         " contexts, cap is " + std::to_string(cap));
  }
  const std::size_t u = vocab.universe_size();
  std::vector<Obj> universe(u);
  for (std::size_t i = 0; i < u; ++i) universe[i] = object_at(i, vocab);

  // Target at position 0, the others as a non-decreasing index sequence.
  std::array<std::size_t, kMaxSetSize> idx{};
  std::array<Obj, kMaxSetSize> objs{};
  for (std::size_t t = 0; t < u; ++t) {
    objs[0] = universe[t];
    for (std::size_t k = 0; k < max_set_size; ++k) {
      // k others
      std::fill(idx.begin(), idx.begin() + k, 0);
      for (;;) {
        for (std::size_t i = 0; i < k; ++i) objs[i + 1] = universe[idx[i]];
        if (!visit(Context(std::span<const Obj>(objs.data(), k + 1), 0))) return;
        // advance to the next non-decreasing sequence
        std::size_t pos = k;
        while (pos > 0 && idx[pos - 1] == u - 1) --pos;
        if (pos == 0) break;
        ++idx[pos - 1];
        for (std::size_t i = pos; i < k; ++i) idx[i] = idx[pos - 1];
      }
    }
  }
}

std::optional<Context> find_counterexample(const Concept& a, const Concept& b,
                                           const FeatureVocab& vocab,
                                           const EquivalenceOptions& options) {
  std::optional<Context> witness;
  for_each_context(vocab, options.max_set_size, options.context_cap, [&](const Context& ctx) {
    if (eval(a, ctx) != eval(b, ctx)) {
      witness = ctx;
      return false;
    }
    return true;
  });
  return witness;
}

bool equivalent(const Concept& a, const Concept& b, const FeatureVocab& vocab,
                const EquivalenceOptions& options) {
  if (a == b) return true;
  return !find_counterexample(a, b, vocab, options).has_value();
}

}  // namespace conceptlab

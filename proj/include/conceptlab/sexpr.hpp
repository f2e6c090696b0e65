#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace conceptlab {

// Minimal s-expression tree: either an atom or a parenthesized list.
struct SExpr {
  bool is_list = false;
  std::string atom;
  std::vector<SExpr> items;
  std::size_t position = 0;  // byte offset of the first character
};

// Reads exactly one s-expression from `text`; `#` starts a comment that
// runs to end of line. Throws ParseError.
SExpr read_sexpr(std::string_view text);

std::string write_sexpr(const SExpr& e);

}  // namespace conceptlab

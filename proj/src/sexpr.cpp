#include "conceptlab/sexpr.hpp"

#include <cctype>

#include "conceptlab/error.hpp"

namespace conceptlab {

namespace {

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  SExpr read_top() {
    skip();
    if (pos_ >= text_.size()) throw ParseError("empty expression", pos_);
    SExpr e = read();
    skip();
    if (pos_ < text_.size()) throw ParseError("trailing input", pos_);
    return e;
  }

 private:
  void skip() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  SExpr read() {
    SExpr e;
    e.position = pos_;
    char c = text_[pos_];
    if (c == ')') throw ParseError("unexpected ')'", pos_);
    if (c == '(') {
      e.is_list = true;
      ++pos_;
      for (;;) {
        skip();
        if (pos_ >= text_.size()) throw ParseError("unclosed '('", e.position);
        if (text_[pos_] == ')') {
          ++pos_;
          return e;
        }
        e.items.push_back(read());
      }
    }
    std::size_t start = pos_;
    while (pos_ < text_.size()) {
      char d = text_[pos_];
      if (d == '(' || d == ')' || d == '#' || std::isspace(static_cast<unsigned char>(d))) break;
      ++pos_;
    }
    e.atom = std::string(text_.substr(start, pos_ - start));
    return e;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

SExpr read_sexpr(std::string_view text) { return Reader(text).read_top(); }

std::string write_sexpr(const SExpr& e) {
  if (!e.is_list) return e.atom;
  std::string out = "(";
  for (std::size_t i = 0; i < e.items.size(); ++i) {
    if (i) out += ' ';
    out += write_sexpr(e.items[i]);
  }
  out += ')';
  return out;
}

}  // namespace conceptlab

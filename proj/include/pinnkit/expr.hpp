#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "pinnkit/error.hpp"
#include "pinnkit/ops.hpp"
#include "pinnkit/tensor.hpp"

namespace pinnkit {

// ============================================================================
// VarKey
// ============================================================================

/// A value name plus the coordinates it is differentiated by. Partials are
/// kept sorted, so u__t__x and u__x__t name the same derivative. The text
/// form is base__p1__p2...
struct VarKey {
  std::string base;
  std::vector<std::string> partials;

  VarKey() = default;
  VarKey(std::string b, std::vector<std::string> p = {})
      : base(std::move(b)), partials(std::move(p)) {
    std::sort(partials.begin(), partials.end());
  }
  VarKey(const char* text) : VarKey(parse(text)) {}

  static VarKey parse(std::string_view text) {
    VarKey k;
    std::size_t pos = text.find("__");
    k.base = std::string(text.substr(0, pos));
    while (pos != std::string_view::npos) {
      const std::size_t start = pos + 2;
      pos = text.find("__", start);
      k.partials.emplace_back(text.substr(start, pos == std::string_view::npos
                                                     ? std::string_view::npos
                                                     : pos - start));
    }
    if (k.base.empty()) throw ContractError("VarKey: empty base in '" + std::string(text) + "'");
    for (const auto& p : k.partials) {
      if (p.empty()) throw ContractError("VarKey: empty partial in '" + std::string(text) + "'");
    }
    std::sort(k.partials.begin(), k.partials.end());
    return k;
  }

  std::string str() const {
    std::string s = base;
    for (const auto& p : partials) s += "__" + p;
    return s;
  }
  std::size_t order() const { return partials.size(); }
  bool is_derivative() const { return !partials.empty(); }

  /// The key with one fewer partial (drops the last sorted symbol).
  VarKey parent() const {
    VarKey k = *this;
    k.partials.pop_back();
    return k;
  }
  VarKey with_partial(const std::string& by) const {
    auto p = partials;
    p.push_back(by);
    return VarKey(base, std::move(p));
  }

  friend bool operator==(const VarKey&, const VarKey&) = default;
  friend auto operator<=>(const VarKey& a, const VarKey& b) { return a.str() <=> b.str(); }
};

using Env = std::map<VarKey, Tensor>;

// ============================================================================
// AST
// ============================================================================

enum class UnaryFn { neg, sin, cos, exp, cosh, sinh, tanh, sqrt, abs };
enum class BinaryOp { add, sub, mul, div, pow };

class Expr {
 public:
  struct Number { double value; };
  struct Symbol { VarKey key; };
  struct Unary;
  struct Binary;
  struct Diff { VarKey source; std::string by; int order; };

  Expr() = default;

  static Expr number(double v);
  static Expr symbol(VarKey k);
  static Expr unary(UnaryFn f, Expr a);
  static Expr binary(BinaryOp op, Expr l, Expr r);
  static Expr diff(VarKey source, std::string by, int order);

  static Expr parse(std::string_view src);

  template <class T> const T* as() const;
  bool valid() const;

  /// Key a diff node refers to, e.g. diff(u,x,2) -> u__x__x.
  static VarKey diff_key(const Diff& d) {
    VarKey k = d.source;
    for (int i = 0; i < d.order; ++i) k = k.with_partial(d.by);
    return k;
  }

  /// Fully parenthesized text that parses back to the same tree.
  std::string print() const;

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  using Node = std::variant<Number, Symbol, Unary, Binary, Diff>;
  explicit Expr(Node n);
  std::shared_ptr<const Node> node_;
};

struct Expr::Unary { UnaryFn fn; Expr arg; };
struct Expr::Binary { BinaryOp op; Expr lhs; Expr rhs; };

inline Expr::Expr(Node n) : node_(std::make_shared<const Node>(std::move(n))) {}

inline bool Expr::valid() const { return static_cast<bool>(node_); }

template <class T> const T* Expr::as() const { return std::get_if<T>(node_.get()); }

inline Expr Expr::number(double v) { return Expr(Number{v}); }
inline Expr Expr::symbol(VarKey k) { return Expr(Symbol{std::move(k)}); }
inline Expr Expr::diff(VarKey source, std::string by, int order) {
  if (order < 1) throw ContractError("diff: order must be >= 1");
  return Expr(Diff{std::move(source), std::move(by), order});
}

inline Expr Expr::unary(UnaryFn f, Expr a) { return Expr(Unary{f, std::move(a)}); }

inline Expr Expr::binary(BinaryOp op, Expr l, Expr r) {
  if (op == BinaryOp::pow && !r.as<Number>()) {
    throw ContractError("'^' exponent must be a number literal");
  }
  return Expr(Binary{op, std::move(l), std::move(r)});
}

inline bool operator==(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return true;
  if (!a.node_ || !b.node_ || a.node_->index() != b.node_->index()) return false;
  if (auto* x = a.as<Expr::Number>()) return x->value == b.as<Expr::Number>()->value;
  if (auto* x = a.as<Expr::Symbol>()) return x->key == b.as<Expr::Symbol>()->key;
  if (auto* x = a.as<Expr::Unary>()) {
    auto* y = b.as<Expr::Unary>();
    return x->fn == y->fn && x->arg == y->arg;
  }
  if (auto* x = a.as<Expr::Binary>()) {
    auto* y = b.as<Expr::Binary>();
    return x->op == y->op && x->lhs == y->lhs && x->rhs == y->rhs;
  }
  auto* x = a.as<Expr::Diff>();
  auto* y = b.as<Expr::Diff>();
  return x->source == y->source && x->by == y->by && x->order == y->order;
}

namespace detail {

inline const std::map<std::string, UnaryFn, std::less<>>& unary_functions() {
  static const std::map<std::string, UnaryFn, std::less<>> fns{
      {"neg", UnaryFn::neg},   {"sin", UnaryFn::sin},   {"cos", UnaryFn::cos},
      {"exp", UnaryFn::exp},   {"cosh", UnaryFn::cosh}, {"sinh", UnaryFn::sinh},
      {"tanh", UnaryFn::tanh}, {"sqrt", UnaryFn::sqrt}, {"abs", UnaryFn::abs}};
  return fns;
}

inline std::string unary_name(UnaryFn f) {
  for (const auto& [name, fn] : unary_functions()) {
    if (fn == f) return name;
  }
  return "?";
}

inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ----------------------------------------------------------------------------
// Lexer
// ----------------------------------------------------------------------------

struct Token {
  enum Kind { number, ident, op, end } kind;
  std::string text;
  double value = 0.0;
  std::size_t line = 1, column = 1;
};

inline std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0, line = 1, col = 1;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    Token t{Token::end, "", 0.0, line, col};
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t j = i;
      while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.')) ++j;
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          while (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) ++k;
          j = k;
        }
      }
      t.kind = Token::number;
      t.text = std::string(src.substr(i, j - i));
      auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.value);
      if (res.ec != std::errc{} || res.ptr != t.text.data() + t.text.size()) {
        throw ParseError("malformed number '" + t.text + "'", line, col);
      }
      advance(j - i);
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_'))
        ++j;
      t.kind = Token::ident;
      t.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else if (std::string_view("+-*/^(),<>&").find(c) != std::string_view::npos) {
      t.kind = Token::op;
      t.text = std::string(1, c);
      advance(1);
    } else {
      throw ParseError(std::string("unexpected character '") + c + "'", line, col);
    }
    out.push_back(std::move(t));
  }
  out.push_back(Token{Token::end, "", 0.0, line, col});
  return out;
}

// ----------------------------------------------------------------------------
// Recursive-descent parser
// ----------------------------------------------------------------------------

class Parser {
 public:
  explicit Parser(std::string_view src) : toks_(tokenize(src)) {}

  Expr parse_full_expr() {
    Expr e = expr();
    expect_end();
    return e;
  }

  const Token& peek() const { return toks_[pos_]; }
  std::size_t position() const { return pos_; }
  void rewind(std::size_t p) { pos_ = p; }
  bool at_op(const char* s) const { return peek().kind == Token::op && peek().text == s; }
  void expect_end() const {
    if (peek().kind != Token::end) fail("unexpected '" + peek().text + "'");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, peek().line, peek().column);
  }

  void expect(const char* s) {
    if (!at_op(s)) {
      fail(std::string("expected '") + s + "' but found " +
           (peek().kind == Token::end ? std::string("end of input") : "'" + peek().text + "'"));
    }
    ++pos_;
  }

  // expr := term (("+"|"-") term)*
  Expr expr() {
    Expr lhs = term();
    while (at_op("+") || at_op("-")) {
      const bool plus = peek().text == "+";
      ++pos_;
      lhs = Expr::binary(plus ? BinaryOp::add : BinaryOp::sub, lhs, term());
    }
    return lhs;
  }

  // term := factor (("*"|"/") factor)*
  Expr term() {
    Expr lhs = factor();
    while (at_op("*") || at_op("/")) {
      const bool times = peek().text == "*";
      ++pos_;
      lhs = Expr::binary(times ? BinaryOp::mul : BinaryOp::div, lhs, factor());
    }
    return lhs;
  }

  // factor := "-" factor | base ("^" exponent)?   (so -x^2 = -(x^2))
  Expr factor() {
    if (at_op("-")) {
      ++pos_;
      return Expr::unary(UnaryFn::neg, factor());
    }
    Expr b = base();
    if (at_op("^")) {
      ++pos_;
      return Expr::binary(BinaryOp::pow, b, Expr::number(exponent()));
    }
    return b;
  }

  // Exponents are literals; a^b^c folds right-associatively to a^(b^c).
  double exponent() {
    bool negative = false;
    if (at_op("-")) {
      negative = true;
      ++pos_;
    }
    if (peek().kind != Token::number) fail("'^' exponent must be a number literal");
    double v = peek().value;
    ++pos_;
    if (negative) v = -v;
    if (at_op("^")) {
      ++pos_;
      v = std::pow(v, exponent());
    }
    return v;
  }

  Expr base() {
    const Token& t = peek();
    if (t.kind == Token::number) {
      ++pos_;
      return Expr::number(t.value);
    }
    if (at_op("(")) {
      ++pos_;
      Expr e = expr();
      expect(")");
      return e;
    }
    if (t.kind == Token::ident) {
      const std::string name = t.text;
      ++pos_;
      if (at_op("(")) return call(name);
      if (name == "pi") return Expr::number(std::numbers::pi);
      if (name == "e") return Expr::number(std::numbers::e);
      return Expr::symbol(VarKey::parse(name));
    }
    if (t.kind == Token::end) fail("unexpected end of input");
    fail("unexpected '" + t.text + "'");
  }

  Expr call(const std::string& name) {
    const Token& at = toks_[pos_ - 1];
    expect("(");
    if (name == "diff") {
      if (peek().kind != Token::ident) fail("diff: first argument must be a symbol");
      VarKey source = VarKey::parse(peek().text);
      ++pos_;
      expect(",");
      if (peek().kind != Token::ident) fail("diff: second argument must be a symbol");
      std::string by = peek().text;
      ++pos_;
      int order = 1;
      if (at_op(",")) {
        ++pos_;
        const Token& o = peek();
        if (o.kind != Token::number || o.value < 1 || std::floor(o.value) != o.value) {
          fail("diff: order must be a positive integer");
        }
        order = static_cast<int>(o.value);
        ++pos_;
      }
      expect(")");
      return Expr::diff(std::move(source), std::move(by), order);
    }
    auto it = unary_functions().find(name);
    if (it == unary_functions().end()) {
      throw ParseError("unknown function '" + name + "'", at.line, at.column);
    }
    Expr arg = expr();
    expect(")");
    return Expr::unary(it->second, arg);
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Expr Expr::parse(std::string_view src) {
  if (src.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw ParseError("empty expression", 1, 1);
  }
  detail::Parser p(src);
  return p.parse_full_expr();
}

inline std::string Expr::print() const {
  if (auto* n = as<Number>()) return detail::format_number(n->value);
  if (auto* s = as<Symbol>()) return s->key.str();
  if (auto* u = as<Unary>()) {
    if (u->fn == UnaryFn::neg) return "(-" + u->arg.print() + ")";
    return detail::unary_name(u->fn) + "(" + u->arg.print() + ")";
  }
  if (auto* b = as<Binary>()) {
    static const char* sym[] = {" + ", " - ", " * ", " / ", "^"};
    return "(" + b->lhs.print() + sym[static_cast<int>(b->op)] + b->rhs.print() + ")";
  }
  auto* d = as<Diff>();
  return "diff(" + d->source.str() + "," + d->by + "," + std::to_string(d->order) + ")";
}

// ============================================================================
// Free keys and evaluation
// ============================================================================

inline void collect_keys(const Expr& e, std::set<VarKey>& out) {
  if (auto* s = e.as<Expr::Symbol>()) {
    out.insert(s->key);
  } else if (auto* u = e.as<Expr::Unary>()) {
    collect_keys(u->arg, out);
  } else if (auto* b = e.as<Expr::Binary>()) {
    collect_keys(b->lhs, out);
    collect_keys(b->rhs, out);
  } else if (auto* d = e.as<Expr::Diff>()) {
    out.insert(Expr::diff_key(*d));
  }
}

/// Every symbol and derivative reference in canonical form.
inline std::set<VarKey> free_keys(const Expr& e) {
  std::set<VarKey> out;
  collect_keys(e, out);
  return out;
}

inline Tensor apply_unary(UnaryFn fn, const Tensor& a) {
  switch (fn) {
    case UnaryFn::neg: return neg(a);
    case UnaryFn::sin: return sin(a);
    case UnaryFn::cos: return cos(a);
    case UnaryFn::exp: return exp(a);
    case UnaryFn::cosh: return cosh(a);
    case UnaryFn::sinh: return sinh(a);
    case UnaryFn::tanh: return tanh(a);
    case UnaryFn::sqrt: return sqrt(a);
    case UnaryFn::abs: return abs(a);
  }
  throw ContractError("unknown unary function");
}

namespace detail {
inline Tensor eval_node(const Expr& e, const Env& env) {
  if (auto* n = e.as<Expr::Number>()) return Tensor::scalar(n->value);
  const VarKey* key = nullptr;
  VarKey diff_key;
  if (auto* s = e.as<Expr::Symbol>()) {
    key = &s->key;
  } else if (auto* d = e.as<Expr::Diff>()) {
    diff_key = Expr::diff_key(*d);
    key = &diff_key;
  }
  if (key) {
    auto it = env.find(*key);
    if (it == env.end()) throw UnresolvedSymbolError("unresolved symbol '" + key->str() + "'");
    return it->second;
  }
  if (auto* u = e.as<Expr::Unary>()) return apply_unary(u->fn, eval_node(u->arg, env));
  auto* b = e.as<Expr::Binary>();
  Tensor l = eval_node(b->lhs, env);
  switch (b->op) {
    case BinaryOp::add: return add(l, eval_node(b->rhs, env));
    case BinaryOp::sub: return sub(l, eval_node(b->rhs, env));
    case BinaryOp::mul: return mul(l, eval_node(b->rhs, env));
    case BinaryOp::div: return div(l, eval_node(b->rhs, env));
    case BinaryOp::pow: return pow(l, b->rhs.as<Expr::Number>()->value);
  }
  throw ContractError("unknown binary operator");
}
}  // namespace detail

/// Evaluates with autodiff ops, so gradients flow through the result. A
/// constant expression is broadcast to `rows` x 1 when rows > 0.
inline Tensor eval(const Expr& e, const Env& env, std::size_t rows = 0) {
  Tensor t = detail::eval_node(e, env);
  if (rows > 0 && t.is_scalar() && rows != 1) t = expand(t, rows, 1);
  if (rows > 0 && t.rows() != rows) {
    throw DimensionError("eval: result has " + std::to_string(t.rows()) + " rows, expected " +
                         std::to_string(rows));
  }
  return t;
}

/// Plain scalar evaluation; `lookup` resolves symbols (and derivative keys).
inline double eval_scalar(const Expr& e, const std::function<double(const VarKey&)>& lookup) {
  if (auto* n = e.as<Expr::Number>()) return n->value;
  if (auto* s = e.as<Expr::Symbol>()) return lookup(s->key);
  if (auto* d = e.as<Expr::Diff>()) return lookup(Expr::diff_key(*d));
  if (auto* u = e.as<Expr::Unary>()) {
    const double a = eval_scalar(u->arg, lookup);
    switch (u->fn) {
      case UnaryFn::neg: return -a;
      case UnaryFn::sin: return std::sin(a);
      case UnaryFn::cos: return std::cos(a);
      case UnaryFn::exp: return std::exp(a);
      case UnaryFn::cosh: return std::cosh(a);
      case UnaryFn::sinh: return std::sinh(a);
      case UnaryFn::tanh: return std::tanh(a);
      case UnaryFn::sqrt:
        if (a < 0) throw NumericError("sqrt: negative argument");
        return std::sqrt(a);
      case UnaryFn::abs: return std::abs(a);
    }
  }
  auto* b = e.as<Expr::Binary>();
  const double l = eval_scalar(b->lhs, lookup), r = eval_scalar(b->rhs, lookup);
  switch (b->op) {
    case BinaryOp::add: return l + r;
    case BinaryOp::sub: return l - r;
    case BinaryOp::mul: return l * r;
    case BinaryOp::div:
      if (r == 0.0) throw NumericError("div: division by zero");
      return l / r;
    case BinaryOp::pow: return std::pow(l, r);
  }
  throw ContractError("unknown binary operator");
}

// ============================================================================
// Predicates (sieves)
// ============================================================================

/// Conjunction of comparisons over coordinate symbols, e.g.
/// "(y > -1) & (y < 1)".
///   pred := atom ("&" atom)* ; atom := "(" pred ")" | expr ("<"|">") expr
class Predicate {
 public:
  struct Comparison {
    Expr lhs;
    bool less;  // lhs < rhs, otherwise lhs > rhs
    Expr rhs;
  };

  static Predicate parse(std::string_view src) {
    if (src.find_first_not_of(" \t\r\n") == std::string_view::npos) {
      throw ParseError("empty predicate", 1, 1);
    }
    detail::Parser p(src);
    Predicate out;
    out.source_ = std::string(src);
    conjunction(p, out.terms_);
    p.expect_end();
    return out;
  }

  bool holds(const std::function<double(const VarKey&)>& lookup) const {
    for (const auto& c : terms_) {
      const double l = eval_scalar(c.lhs, lookup), r = eval_scalar(c.rhs, lookup);
      if (c.less ? !(l < r) : !(l > r)) return false;
    }
    return true;
  }

  /// Evaluates at a point whose coordinates are named by `symbols`.
  bool holds_at(std::span<const double> point, std::span<const std::string> symbols) const {
    return holds([&](const VarKey& k) {
      for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (!k.is_derivative() && k.base == symbols[i]) return point[i];
      }
      throw UnresolvedSymbolError("unresolved symbol '" + k.str() + "' in predicate");
    });
  }

  std::set<VarKey> free_keys() const {
    std::set<VarKey> out;
    for (const auto& c : terms_) {
      collect_keys(c.lhs, out);
      collect_keys(c.rhs, out);
    }
    return out;
  }

  const std::string& source() const { return source_; }
  const std::vector<Comparison>& terms() const { return terms_; }

 private:
  static void conjunction(detail::Parser& p, std::vector<Comparison>& out) {
    atom(p, out);
    while (p.at_op("&")) {
      p.expect("&");
      atom(p, out);
    }
  }

  static void atom(detail::Parser& p, std::vector<Comparison>& out) {
    if (p.at_op("(")) {
      // Either a parenthesized predicate or a comparison whose left side
      // starts with a parenthesized expression.
      const std::size_t save = p.position();
      try {
        p.expect("(");
        std::vector<Comparison> inner;
        conjunction(p, inner);
        p.expect(")");
        out.insert(out.end(), inner.begin(), inner.end());
        return;
      } catch (const ParseError&) {
        p.rewind(save);
      }
    }
    Expr lhs = p.expr();
    bool less;
    if (p.at_op("<")) {
      less = true;
    } else if (p.at_op(">")) {
      less = false;
    } else {
      p.fail("expected '<' or '>' in predicate");
    }
    p.expect(less ? "<" : ">");
    Expr rhs = p.expr();
    out.push_back({std::move(lhs), less, std::move(rhs)});
  }

  std::string source_;
  std::vector<Comparison> terms_;
};

}  // namespace pinnkit

#pragma once

// Immutable scalar expression trees over a fixed variable list: constants,
// variables, sums, products, negation, non-negative integer powers, and
// sin/cos/exp.  Division is not a node kind; rational constants are folded
// host-side before trees are built.  The module supplies a recursive-descent
// parser, a canonical printer (parse(print(e)) reproduces e structurally),
// symbolic differentiation, and Taylor polynomialization with tensor-product
// truncation: every variable's own degree is capped at k independently, so
// the degree-(k,k) cross terms survive.

#include <Eigen/Dense>

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sosmpc/polynomial.hpp"

namespace sosmpc {

using ExpansionPoint = Eigen::VectorXd;

class Expr {
 public:
  enum class Kind { Constant, Variable, Sum, Product, Negate, Power, Sin, Cos, Exp };

  Expr() : Expr(constant(0.0)) {}

  Kind kind() const { return node_->kind; }
  double value() const { return node_->value; }
  int var_index() const { return node_->index; }
  int exponent() const { return node_->index; }
  int num_children() const { return static_cast<int>(node_->kids.size()); }
  const Expr& child(int i) const { return node_->kids[i]; }

  bool is_constant(double v) const {
    return kind() == Kind::Constant && value() == v;
  }

  // ---- raw constructors (no simplification; used by the parser) ----

  static Expr constant(double v) { return make(Kind::Constant, v, 0, {}); }
  static Expr variable(int index) {
    if (index < 0) throw std::invalid_argument("Expr: negative variable index");
    return make(Kind::Variable, 0.0, index, {});
  }
  static Expr raw_add(Expr a, Expr b) { return make(Kind::Sum, 0, 0, {std::move(a), std::move(b)}); }
  static Expr raw_mul(Expr a, Expr b) { return make(Kind::Product, 0, 0, {std::move(a), std::move(b)}); }
  static Expr raw_neg(Expr a) { return make(Kind::Negate, 0, 0, {std::move(a)}); }
  static Expr raw_pow(Expr a, int k) {
    if (k < 0) throw std::invalid_argument("Expr: power exponent must be >= 0");
    return make(Kind::Power, 0, k, {std::move(a)});
  }
  static Expr raw_sin(Expr a) { return make(Kind::Sin, 0, 0, {std::move(a)}); }
  static Expr raw_cos(Expr a) { return make(Kind::Cos, 0, 0, {std::move(a)}); }
  static Expr raw_exp(Expr a) { return make(Kind::Exp, 0, 0, {std::move(a)}); }

  // ---- folding constructors (constant folding + identity elimination) ----

  static Expr add(Expr a, Expr b) {
    if (a.kind() == Kind::Constant && b.kind() == Kind::Constant)
      return constant(a.value() + b.value());
    if (a.is_constant(0.0)) return b;
    if (b.is_constant(0.0)) return a;
    return raw_add(std::move(a), std::move(b));
  }
  static Expr mul(Expr a, Expr b) {
    if (a.kind() == Kind::Constant && b.kind() == Kind::Constant)
      return constant(a.value() * b.value());
    if (a.is_constant(0.0) || b.is_constant(0.0)) return constant(0.0);
    if (a.is_constant(1.0)) return b;
    if (b.is_constant(1.0)) return a;
    return raw_mul(std::move(a), std::move(b));
  }
  static Expr neg(Expr a) {
    if (a.kind() == Kind::Constant) return constant(-a.value());
    if (a.kind() == Kind::Negate) return a.child(0);
    return raw_neg(std::move(a));
  }
  static Expr pow(Expr a, int k) {
    if (k < 0) throw std::invalid_argument("Expr: power exponent must be >= 0");
    if (k == 0) return constant(1.0);
    if (k == 1) return a;
    if (a.kind() == Kind::Constant) return constant(std::pow(a.value(), k));
    return raw_pow(std::move(a), k);
  }
  static Expr sin(Expr a) {
    if (a.kind() == Kind::Constant) return constant(std::sin(a.value()));
    return raw_sin(std::move(a));
  }
  static Expr cos(Expr a) {
    if (a.kind() == Kind::Constant) return constant(std::cos(a.value()));
    return raw_cos(std::move(a));
  }
  static Expr exp(Expr a) {
    if (a.kind() == Kind::Constant) return constant(std::exp(a.value()));
    return raw_exp(std::move(a));
  }

  /// Structural equality (same shape, same constants, same indices).
  bool same(const Expr& o) const {
    if (node_ == o.node_) return true;
    if (kind() != o.kind()) return false;
    switch (kind()) {
      case Kind::Constant:
        if (value() != o.value()) return false;
        break;
      case Kind::Variable:
      case Kind::Power:
        if (node_->index != o.node_->index) return false;
        break;
      default:
        break;
    }
    if (num_children() != o.num_children()) return false;
    for (int i = 0; i < num_children(); ++i)
      if (!child(i).same(o.child(i))) return false;
    return true;
  }

  /// Largest variable index used, or -1 if none.
  int max_var_index() const {
    int m = kind() == Kind::Variable ? node_->index : -1;
    for (const auto& c : node_->kids) m = std::max(m, c.max_var_index());
    return m;
  }

  const void* id() const { return node_.get(); }

 private:
  struct Node {
    Kind kind;
    double value;
    int index;  // variable index or power exponent
    std::vector<Expr> kids;
  };

  static Expr make(Kind k, double v, int idx, std::vector<Expr> kids) {
    Expr e(nullptr);
    e.node_ = std::make_shared<const Node>(Node{k, v, idx, std::move(kids)});
    return e;
  }

  std::shared_ptr<const Node> node_;

  Expr(std::nullptr_t) {}  // used by make()
};

inline double eval(const Expr& e, const Eigen::VectorXd& point) {
  switch (e.kind()) {
    case Expr::Kind::Constant:
      return e.value();
    case Expr::Kind::Variable:
      if (e.var_index() >= point.size())
        throw std::invalid_argument("Expr eval: variable index beyond point dimension");
      return point(e.var_index());
    case Expr::Kind::Sum:
      return eval(e.child(0), point) + eval(e.child(1), point);
    case Expr::Kind::Product:
      return eval(e.child(0), point) * eval(e.child(1), point);
    case Expr::Kind::Negate:
      return -eval(e.child(0), point);
    case Expr::Kind::Power: {
      const double b = eval(e.child(0), point);
      double r = 1.0;
      for (int i = 0; i < e.exponent(); ++i) r *= b;
      return r;
    }
    case Expr::Kind::Sin:
      return std::sin(eval(e.child(0), point));
    case Expr::Kind::Cos:
      return std::cos(eval(e.child(0), point));
    case Expr::Kind::Exp:
      return std::exp(eval(e.child(0), point));
  }
  throw std::logic_error("Expr eval: unknown node kind");
}

namespace detail {

using DiffCache = std::map<std::pair<const void*, int>, Expr>;

inline Expr diff_impl(const Expr& e, int var, DiffCache& cache) {
  const auto key = std::make_pair(e.id(), var);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  Expr r;
  switch (e.kind()) {
    case Expr::Kind::Constant:
      r = Expr::constant(0.0);
      break;
    case Expr::Kind::Variable:
      r = Expr::constant(e.var_index() == var ? 1.0 : 0.0);
      break;
    case Expr::Kind::Sum:
      r = Expr::add(diff_impl(e.child(0), var, cache), diff_impl(e.child(1), var, cache));
      break;
    case Expr::Kind::Product:
      r = Expr::add(Expr::mul(diff_impl(e.child(0), var, cache), e.child(1)),
                    Expr::mul(e.child(0), diff_impl(e.child(1), var, cache)));
      break;
    case Expr::Kind::Negate:
      r = Expr::neg(diff_impl(e.child(0), var, cache));
      break;
    case Expr::Kind::Power:
      if (e.exponent() == 0) {  // e^0 is identically 1
        r = Expr::constant(0.0);
        break;
      }
      r = Expr::mul(Expr::mul(Expr::constant(e.exponent()), Expr::pow(e.child(0), e.exponent() - 1)),
                    diff_impl(e.child(0), var, cache));
      break;
    case Expr::Kind::Sin:
      r = Expr::mul(Expr::cos(e.child(0)), diff_impl(e.child(0), var, cache));
      break;
    case Expr::Kind::Cos:
      r = Expr::mul(Expr::neg(Expr::sin(e.child(0))), diff_impl(e.child(0), var, cache));
      break;
    case Expr::Kind::Exp:
      r = Expr::mul(Expr::exp(e.child(0)), diff_impl(e.child(0), var, cache));
      break;
  }
  cache.emplace(key, r);
  return r;
}

}  // namespace detail

/// Symbolic partial derivative; shared subtrees are differentiated once.
inline Expr diff(const Expr& e, int var) {
  detail::DiffCache cache;
  return detail::diff_impl(e, var, cache);
}

/// Taylor polynomialization about y with tensor-product truncation: the
/// result is sum over multi-indices a in [0..k]^n of
///   D^a f(y) / prod(a_i!) * prod (x_i - y_i)^{a_i}.
/// Mixed terms up to degree n*k survive; each variable alone is capped at k.
inline Polynomial taylor(const Expr& e, const ExpansionPoint& y, int k) {
  if (k < 0) throw std::invalid_argument("taylor: order must be >= 0");
  const int n = static_cast<int>(y.size());
  if (e.max_var_index() >= n)
    throw std::invalid_argument("taylor: expression uses variables beyond the expansion point");

  // (x_i - y_i)^j factors, memoized.
  std::vector<std::vector<Polynomial>> shift_pow(n);
  for (int i = 0; i < n; ++i) {
    shift_pow[i].push_back(Polynomial::constant(n, 1.0));
    Polynomial lin = Polynomial::variable(n, i) - Polynomial::constant(n, y(i));
    shift_pow[i].push_back(lin);
  }
  auto shift = [&](int i, int j) -> const Polynomial& {
    while (static_cast<int>(shift_pow[i].size()) <= j)
      shift_pow[i].push_back(shift_pow[i].back() * shift_pow[i][1]);
    return shift_pow[i][j];
  };

  detail::DiffCache cache;
  Polynomial result(n);
  std::vector<int> alpha(n, 0);

  // Depth-first over multi-indices; level i hands down d^{alpha_i}/dx_i^{alpha_i}
  // applied to the parent expression, so each mixed partial is formed once.
  auto walk = [&](auto&& self, const Expr& cur, int i, double fact) -> void {
    if (i == n) {
      const double coeff = eval(cur, y) / fact;
      if (coeff == 0.0) return;
      Polynomial term = Polynomial::constant(n, coeff);
      for (int v = 0; v < n; ++v)
        if (alpha[v] > 0) term = term * shift(v, alpha[v]);
      result += term;
      return;
    }
    Expr d = cur;
    double f = 1.0;
    for (int j = 0; j <= k; ++j) {
      if (j > 0) {
        d = detail::diff_impl(d, i, cache);
        f *= j;
        if (d.is_constant(0.0)) break;  // all higher partials vanish
      }
      alpha[i] = j;
      self(self, d, i + 1, fact * f);
    }
    alpha[i] = 0;
  };
  walk(walk, e, 0, 1.0);
  return result;
}

/// Exact polynomial conversion; nullopt if the tree contains sin/cos/exp.
inline std::optional<Polynomial> try_to_polynomial(const Expr& e, int nvars) {
  if (e.max_var_index() >= nvars)
    throw std::invalid_argument("try_to_polynomial: expression uses variables beyond nvars");
  switch (e.kind()) {
    case Expr::Kind::Constant:
      return Polynomial::constant(nvars, e.value());
    case Expr::Kind::Variable:
      return Polynomial::variable(nvars, e.var_index());
    case Expr::Kind::Sum: {
      auto a = try_to_polynomial(e.child(0), nvars);
      auto b = try_to_polynomial(e.child(1), nvars);
      if (!a || !b) return std::nullopt;
      return *a + *b;
    }
    case Expr::Kind::Product: {
      auto a = try_to_polynomial(e.child(0), nvars);
      auto b = try_to_polynomial(e.child(1), nvars);
      if (!a || !b) return std::nullopt;
      return *a * *b;
    }
    case Expr::Kind::Negate: {
      auto a = try_to_polynomial(e.child(0), nvars);
      if (!a) return std::nullopt;
      return -*a;
    }
    case Expr::Kind::Power: {
      auto a = try_to_polynomial(e.child(0), nvars);
      if (!a) return std::nullopt;
      Polynomial r = Polynomial::constant(nvars, 1.0);
      for (int i = 0; i < e.exponent(); ++i) r = r * *a;
      return r;
    }
    case Expr::Kind::Sin:
    case Expr::Kind::Cos:
    case Expr::Kind::Exp:
      return std::nullopt;
  }
  return std::nullopt;
}

/// Replace every variable i by replacements[i] (tree substitution).
inline Expr substitute_vars(const Expr& e, const std::vector<Expr>& replacements) {
  switch (e.kind()) {
    case Expr::Kind::Constant:
      return e;
    case Expr::Kind::Variable: {
      const int i = e.var_index();
      if (i >= static_cast<int>(replacements.size()))
        throw std::invalid_argument("substitute_vars: missing replacement");
      return replacements[i];
    }
    case Expr::Kind::Sum:
      return Expr::add(substitute_vars(e.child(0), replacements),
                       substitute_vars(e.child(1), replacements));
    case Expr::Kind::Product:
      return Expr::mul(substitute_vars(e.child(0), replacements),
                       substitute_vars(e.child(1), replacements));
    case Expr::Kind::Negate:
      return Expr::neg(substitute_vars(e.child(0), replacements));
    case Expr::Kind::Power:
      return Expr::pow(substitute_vars(e.child(0), replacements), e.exponent());
    case Expr::Kind::Sin:
      return Expr::sin(substitute_vars(e.child(0), replacements));
    case Expr::Kind::Cos:
      return Expr::cos(substitute_vars(e.child(0), replacements));
    case Expr::Kind::Exp:
      return Expr::exp(substitute_vars(e.child(0), replacements));
  }
  throw std::logic_error("substitute_vars: unknown node kind");
}

// ---------------------------------------------------------------------------
// Parsing and printing
// ---------------------------------------------------------------------------

struct ExprParseError : std::runtime_error {
  ExprParseError(const std::string& msg, size_t pos)
      : std::runtime_error(msg + " (at position " + std::to_string(pos) + ")"),
        position(pos) {}
  size_t position;
};

namespace detail {

struct Lexer {
  enum class Tok { Number, Ident, Plus, Minus, Star, Caret, LParen, RParen, End };

  explicit Lexer(const std::string& s) : src(s) { advance(); }

  Tok tok = Tok::End;
  std::string lexeme;
  double number = 0.0;
  bool number_is_integer = false;
  size_t tok_pos = 0;

  void advance() {
    while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    tok_pos = pos;
    lexeme.clear();
    if (pos >= src.size()) {
      tok = Tok::End;
      return;
    }
    const char c = src[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[pos + 1])))) {
      lex_number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      size_t start = pos;
      while (pos < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_'))
        ++pos;
      lexeme = src.substr(start, pos - start);
      tok = Tok::Ident;
      return;
    }
    ++pos;
    switch (c) {
      case '+': tok = Tok::Plus; return;
      case '-': tok = Tok::Minus; return;
      case '*': tok = Tok::Star; return;
      case '^': tok = Tok::Caret; return;
      case '(': tok = Tok::LParen; return;
      case ')': tok = Tok::RParen; return;
      default:
        throw ExprParseError(std::string("unexpected character '") + c + "'", tok_pos);
    }
  }

 private:
  void lex_number() {
    size_t start = pos;
    bool has_dot = false, has_exp = false;
    while (pos < src.size()) {
      const char c = src[pos];
      if (std::isdigit(static_cast<unsigned char>(c))) {
        ++pos;
      } else if (c == '.' && !has_dot && !has_exp) {
        has_dot = true;
        ++pos;
      } else if ((c == 'e' || c == 'E') && !has_exp && pos > start) {
        // exponent must be followed by optional sign and digits
        size_t look = pos + 1;
        if (look < src.size() && (src[look] == '+' || src[look] == '-')) ++look;
        if (look < src.size() && std::isdigit(static_cast<unsigned char>(src[look]))) {
          has_exp = true;
          pos = look + 1;
          while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) ++pos;
        } else {
          break;
        }
      } else {
        break;
      }
    }
    lexeme = src.substr(start, pos - start);
    number = std::strtod(lexeme.c_str(), nullptr);
    number_is_integer = !has_dot && !has_exp;
    tok = Tok::Number;
  }

  const std::string& src;
  size_t pos = 0;
};

class Parser {
 public:
  Parser(const std::string& text, const std::vector<std::string>& var_names)
      : lex_(text), vars_(var_names) {}

  Expr parse() {
    Expr e = parse_sum();
    if (lex_.tok != Lexer::Tok::End)
      throw ExprParseError("unexpected trailing input", lex_.tok_pos);
    return e;
  }

 private:
  using Tok = Lexer::Tok;

  Expr parse_sum() {
    Expr e = parse_term();
    while (lex_.tok == Tok::Plus || lex_.tok == Tok::Minus) {
      const bool minus = lex_.tok == Tok::Minus;
      lex_.advance();
      Expr rhs = parse_term();
      e = Expr::raw_add(std::move(e), minus ? Expr::raw_neg(std::move(rhs)) : std::move(rhs));
    }
    return e;
  }

  Expr parse_term() {
    Expr e = parse_unary();
    while (lex_.tok == Tok::Star) {
      lex_.advance();
      e = Expr::raw_mul(std::move(e), parse_unary());
    }
    return e;
  }

  Expr parse_unary() {
    if (lex_.tok == Tok::Minus) {
      lex_.advance();
      // A minus directly on a numeric literal folds into a negative constant
      // so the printer's output for negative numbers reparses to itself.
      // '^' still binds tighter: -2^2 is -(2^2), not (-2)^2.
      if (lex_.tok == Tok::Number) {
        const double v = lex_.number;
        lex_.advance();
        if (lex_.tok == Tok::Caret)
          return Expr::raw_neg(parse_power_suffix(Expr::constant(v)));
        return Expr::constant(-v);
      }
      return Expr::raw_neg(parse_unary());
    }
    return parse_power();
  }

  Expr parse_power() { return parse_power_suffix(parse_atom()); }

  Expr parse_power_suffix(Expr base) {
    if (lex_.tok != Tok::Caret) return base;
    const size_t pos = lex_.tok_pos;
    lex_.advance();
    if (lex_.tok != Tok::Number || !lex_.number_is_integer)
      throw ExprParseError("exponent must be a non-negative integer literal",
                           lex_.tok == Tok::End ? pos : lex_.tok_pos);
    const int k = static_cast<int>(lex_.number);
    lex_.advance();
    if (lex_.tok == Tok::Caret)
      throw ExprParseError("chained '^' is not allowed; parenthesize", lex_.tok_pos);
    return Expr::raw_pow(std::move(base), k);
  }

  Expr parse_atom() {
    switch (lex_.tok) {
      case Tok::Number: {
        const double v = lex_.number;
        lex_.advance();
        return Expr::constant(v);
      }
      case Tok::Ident: {
        const std::string name = lex_.lexeme;
        const size_t pos = lex_.tok_pos;
        lex_.advance();
        if (name == "sin" || name == "cos" || name == "exp") {
          if (lex_.tok != Tok::LParen)
            throw ExprParseError("function '" + name + "' requires parentheses", pos);
          lex_.advance();
          Expr arg = parse_sum();
          expect(Tok::RParen, "')'");
          if (name == "sin") return Expr::raw_sin(std::move(arg));
          if (name == "cos") return Expr::raw_cos(std::move(arg));
          return Expr::raw_exp(std::move(arg));
        }
        for (size_t i = 0; i < vars_.size(); ++i)
          if (vars_[i] == name) return Expr::variable(static_cast<int>(i));
        throw ExprParseError("unknown identifier '" + name + "'", pos);
      }
      case Tok::LParen: {
        lex_.advance();
        Expr e = parse_sum();
        expect(Tok::RParen, "')'");
        return e;
      }
      case Tok::End:
        throw ExprParseError("unexpected end of input", lex_.tok_pos);
      default:
        throw ExprParseError("unexpected token", lex_.tok_pos);
    }
  }

  void expect(Tok t, const char* what) {
    if (lex_.tok != t) throw ExprParseError(std::string("expected ") + what, lex_.tok_pos);
    lex_.advance();
  }

  Lexer lex_;
  const std::vector<std::string>& vars_;
};

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Precedence levels for printing: Sum 1, Product 2, Negate 3, Power 4, atom 5.
inline int print_level(const Expr& e) {
  switch (e.kind()) {
    case Expr::Kind::Sum: return 1;
    case Expr::Kind::Product: return 2;
    case Expr::Kind::Negate: return 3;
    case Expr::Kind::Constant: return e.value() < 0 ? 3 : 5;
    case Expr::Kind::Power: return 4;
    default: return 5;
  }
}

inline void print_impl(const Expr& e, const std::vector<std::string>& vars, int min_level,
                       std::string& out) {
  const bool parens = print_level(e) < min_level;
  if (parens) out += '(';
  switch (e.kind()) {
    case Expr::Kind::Constant:
      out += format_double(e.value());
      break;
    case Expr::Kind::Variable:
      if (e.var_index() < static_cast<int>(vars.size())) {
        out += vars[e.var_index()];
      } else {
        out += "x" + std::to_string(e.var_index() + 1);
      }
      break;
    case Expr::Kind::Sum: {
      print_impl(e.child(0), vars, 1, out);
      const Expr& rhs = e.child(1);
      if (rhs.kind() == Expr::Kind::Negate) {
        out += " - ";
        print_impl(rhs.child(0), vars, 2, out);
      } else {
        out += " + ";
        print_impl(rhs, vars, 2, out);
      }
      break;
    }
    case Expr::Kind::Product:
      print_impl(e.child(0), vars, 2, out);
      out += "*";
      print_impl(e.child(1), vars, 3, out);
      break;
    case Expr::Kind::Negate: {
      out += "-";
      const Expr& inner = e.child(0);
      // "-2" re-lexes as the literal -2 and would swallow the negation node;
      // parenthesize non-negative literals so the tree shape survives.
      if (inner.kind() == Expr::Kind::Constant) {
        const std::string lit = format_double(inner.value());
        if (!lit.empty() && lit[0] != '-') {
          out += "(" + lit + ")";
          break;
        }
        out += lit;
        break;
      }
      print_impl(inner, vars, 3, out);
      break;
    }
    case Expr::Kind::Power:
      print_impl(e.child(0), vars, 5, out);
      out += "^" + std::to_string(e.exponent());
      break;
    case Expr::Kind::Sin:
      out += "sin(";
      print_impl(e.child(0), vars, 0, out);
      out += ")";
      break;
    case Expr::Kind::Cos:
      out += "cos(";
      print_impl(e.child(0), vars, 0, out);
      out += ")";
      break;
    case Expr::Kind::Exp:
      out += "exp(";
      print_impl(e.child(0), vars, 0, out);
      out += ")";
      break;
  }
  if (parens) out += ')';
}

}  // namespace detail

/// Parse an expression over the given variable names (position = index).
inline Expr parse_expr(const std::string& text, const std::vector<std::string>& var_names) {
  return detail::Parser(text, var_names).parse();
}

/// Canonical text form; parse_expr(print_expr(e)) reproduces e structurally.
inline std::string print_expr(const Expr& e, const std::vector<std::string>& var_names) {
  std::string out;
  detail::print_impl(e, var_names, 0, out);
  return out;
}

/// Standard variable name list x1..xn, optionally followed by "t".
inline std::vector<std::string> state_time_names(int n, bool with_time) {
  std::vector<std::string> names;
  for (int i = 1; i <= n; ++i) names.push_back("x" + std::to_string(i));
  if (with_time) names.push_back("t");
  return names;
}

}  // namespace sosmpc

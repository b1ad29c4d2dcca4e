#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kcone/error.hpp"

namespace kcone {

/// Arithmetic expression over variables x1..xn and named parameters,
/// compiled to postfix code.
///
/// Grammar (recursive descent, usual precedence, `^` right-associative and
/// binding tighter than unary minus):
///
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := '-' unary | power
///   power   := primary ('^' unary)?
///   primary := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
///
/// Functions: sin cos exp tanh abs (1 arg), min max (2), hill(x, theta, m)
/// = theta^m / (theta^m + x^m), pwl(x, a, b) = clamp((x - a) / (b - a), 0, 1).
/// Parameters are folded to constants at parse time.
class Expression {
 public:
  enum class Op : unsigned char {
    Const, Var, Add, Sub, Mul, Div, Pow, Neg,
    Sin, Cos, Exp, Tanh, Abs, Min, Max, Hill, Pwl,
  };

  struct Instr {
    Op op;
    double value = 0.0;
    int index = 0;
  };

  Expression() = default;
  explicit Expression(std::vector<Instr> code) : code_(std::move(code)) {}

  double eval(std::span<const double> vars) const {
    double stack[64] = {};
    int top = 0;
    std::vector<double> spill;
    double* s = stack;
    if (code_.size() > 64) {
      spill.resize(code_.size());
      s = spill.data();
    }
    for (const Instr& in : code_) {
      switch (in.op) {
        case Op::Const: s[top++] = in.value; break;
        case Op::Var: s[top++] = vars[static_cast<std::size_t>(in.index)]; break;
        case Op::Neg: s[top - 1] = -s[top - 1]; break;
        case Op::Sin: s[top - 1] = std::sin(s[top - 1]); break;
        case Op::Cos: s[top - 1] = std::cos(s[top - 1]); break;
        case Op::Exp: s[top - 1] = std::exp(s[top - 1]); break;
        case Op::Tanh: s[top - 1] = std::tanh(s[top - 1]); break;
        case Op::Abs: s[top - 1] = std::abs(s[top - 1]); break;
        case Op::Add: --top; s[top - 1] += s[top]; break;
        case Op::Sub: --top; s[top - 1] -= s[top]; break;
        case Op::Mul: --top; s[top - 1] *= s[top]; break;
        case Op::Div: --top; s[top - 1] /= s[top]; break;
        case Op::Pow: --top; s[top - 1] = std::pow(s[top - 1], s[top]); break;
        case Op::Min: --top; s[top - 1] = std::min(s[top - 1], s[top]); break;
        case Op::Max: --top; s[top - 1] = std::max(s[top - 1], s[top]); break;
        case Op::Hill: {
          top -= 2;
          const double x = s[top - 1], theta = s[top], m = s[top + 1];
          const double tm = std::pow(theta, m);
          s[top - 1] = tm / (tm + std::pow(x, m));
          break;
        }
        case Op::Pwl: {
          top -= 2;
          s[top - 1] = pwl(s[top - 1], s[top], s[top + 1]);
          break;
        }
      }
    }
    return s[0];
  }

  /// Ramp from 0 at `a` to 1 at `b`; decreasing when a > b, a unit step when a == b.
  static double pwl(double x, double a, double b) {
    if (a == b) return x >= b ? 1.0 : 0.0;
    const double u = (x - a) / (b - a);
    return std::clamp(u, 0.0, 1.0);
  }

  const std::vector<Instr>& code() const noexcept { return code_; }

 private:
  std::vector<Instr> code_;
};

namespace detail {

class ExprParser {
 public:
  ExprParser(std::string_view src, int n_vars, const std::map<std::string, double>& params)
      : src_(src), n_vars_(n_vars), params_(params) {}

  Expression parse() {
    skip_ws();
    parse_expr();
    skip_ws();
    if (pos_ != src_.size()) fail("expected operator or end of input");
    return Expression(std::move(code_));
  }

 private:
  using Op = Expression::Op;

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::SyntaxError, what, pos_);
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < src_.size() && src_[pos_] == c;
  }

  void emit(Op op, double v = 0.0, int idx = 0) { code_.push_back({op, v, idx}); }

  void parse_expr() {
    parse_term();
    for (;;) {
      if (peek('+')) {
        ++pos_;
        parse_term();
        emit(Op::Add);
      } else if (peek('-')) {
        ++pos_;
        parse_term();
        emit(Op::Sub);
      } else {
        return;
      }
    }
  }

  void parse_term() {
    parse_unary();
    for (;;) {
      if (peek('*')) {
        ++pos_;
        parse_unary();
        emit(Op::Mul);
      } else if (peek('/')) {
        ++pos_;
        parse_unary();
        emit(Op::Div);
      } else {
        return;
      }
    }
  }

  void parse_unary() {
    if (peek('-')) {
      ++pos_;
      parse_unary();
      emit(Op::Neg);
      return;
    }
    if (peek('+')) {
      ++pos_;
      parse_unary();
      return;
    }
    parse_power();
  }

  void parse_power() {
    parse_primary();
    if (peek('^')) {
      ++pos_;
      parse_unary();
      emit(Op::Pow);
    }
  }

  void parse_primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("expected expression");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      parse_expr();
      if (!peek(')')) fail("expected ')'");
      ++pos_;
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      parse_number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      parse_identifier();
      return;
    }
    fail("expected expression");
  }

  void parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        ++pos_;
        ++n;
      }
      return n;
    };
    std::size_t nd = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      nd += digits();
    }
    if (nd == 0) {
      pos_ = start;
      fail("expected number");
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      const std::size_t mark = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) {
        pos_ = mark + 1;
        fail("expected exponent digits");
      }
    }
    double value = 0.0;
    const auto res = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (res.ec != std::errc() || res.ptr != src_.data() + pos_) {
      pos_ = start;
      fail("malformed number");
    }
    emit(Op::Const, value);
  }

  void parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    const std::string name(src_.substr(start, pos_ - start));

    if (peek('(')) {
      ++pos_;
      int argc = 0;
      if (!peek(')')) {
        parse_expr();
        ++argc;
        while (peek(',')) {
          ++pos_;
          parse_expr();
          ++argc;
        }
      }
      if (!peek(')')) fail("expected ',' or ')'");
      ++pos_;
      emit_call(name, argc, start);
      return;
    }

    if (name.size() > 1 && name[0] == 'x' &&
        name.find_first_not_of("0123456789", 1) == std::string::npos) {
      const int idx = std::stoi(name.substr(1));
      if (idx >= 1 && idx <= n_vars_) {
        emit(Op::Var, 0.0, idx - 1);
        return;
      }
    }
    if (auto it = params_.find(name); it != params_.end()) {
      emit(Op::Const, it->second);
      return;
    }
    throw Error(Errc::UnknownIdentifier, "unknown identifier '" + name + "'", start);
  }

  void emit_call(const std::string& name, int argc, std::size_t at) {
    struct Fn {
      const char* name;
      Op op;
      int arity;
    };
    static constexpr Fn table[] = {
        {"sin", Op::Sin, 1},   {"cos", Op::Cos, 1},   {"exp", Op::Exp, 1},
        {"tanh", Op::Tanh, 1}, {"abs", Op::Abs, 1},   {"min", Op::Min, 2},
        {"max", Op::Max, 2},   {"hill", Op::Hill, 3}, {"pwl", Op::Pwl, 3},
    };
    for (const Fn& f : table) {
      if (name == f.name) {
        if (argc != f.arity) {
          throw Error(Errc::ArityMismatch,
                      name + " takes " + std::to_string(f.arity) + " argument(s), got " +
                          std::to_string(argc),
                      at);
        }
        emit(f.op);
        return;
      }
    }
    throw Error(Errc::UnknownIdentifier, "unknown function '" + name + "'", at);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int n_vars_;
  const std::map<std::string, double>& params_;
  std::vector<Expression::Instr> code_;
};

}  // namespace detail

/// Parse one expression over variables x1..x{n_vars}. Error positions are
/// 0-based offsets into `src`.
inline Expression parse_expression(std::string_view src, int n_vars,
                                   const std::map<std::string, double>& params = {}) {
  return detail::ExprParser(src, n_vars, params).parse();
}

}  // namespace kcone

#include <algorithm>
#include <map>

#include "lexer.hpp"
#include "perfalign/error.hpp"
#include "perfalign/minilang.hpp"

namespace perfalign::minilang {

Expr Expr::literal(std::int64_t v) {
  Expr e;
  e.kind = ExprKind::literal;
  e.value = v;
  return e;
}

Expr Expr::variable(std::string name) {
  Expr e;
  e.kind = ExprKind::variable;
  e.name = std::move(name);
  return e;
}

Expr Expr::input(int index) {
  Expr e;
  e.kind = ExprKind::input;
  e.value = index;
  return e;
}

Expr Expr::unary(ExprKind kind, Expr operand) {
  Expr e;
  e.kind = kind;
  e.operands.push_back(std::move(operand));
  return e;
}

Expr Expr::binary(BinaryOp op, Expr lhs, Expr rhs) {
  Expr e;
  e.kind = ExprKind::binary;
  e.op = op;
  e.operands.push_back(std::move(lhs));
  e.operands.push_back(std::move(rhs));
  return e;
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case ExprKind::literal:
    case ExprKind::input:
      return a.value == b.value;
    case ExprKind::variable:
      return a.name == b.name;
    case ExprKind::binary:
      if (a.op != b.op) return false;
      break;
    default:
      break;
  }
  return a.operands == b.operands;
}

bool operator==(const Stmt& a, const Stmt& b) {
  return a.kind == b.kind && a.target == b.target && a.expr == b.expr && a.body == b.body &&
         a.has_else == b.has_else && a.else_body == b.else_body;
}

bool operator==(const Program& a, const Program& b) { return a.statements == b.statements; }

namespace {

using detail::Tok;
using detail::Token;

// Recursion guard well above kMaxDepth so pathological input fails cleanly
// instead of exhausting the stack; the exact depth limit is checked afterwards.
constexpr int kRecursionGuard = 4 * kMaxDepth;

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  Program program() {
    Program p;
    while (peek().kind != Tok::end) p.statements.push_back(statement());
    return p;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }

  const Token& take() { return toks_[pos_++]; }

  bool accept(Tok kind) {
    if (peek().kind != kind) return false;
    ++pos_;
    return true;
  }

  const Token& expect(Tok kind) {
    if (peek().kind != kind) {
      throw ParseError(std::string("expected ") + detail::describe(kind) + ", found " +
                           detail::describe(peek().kind),
                       peek().line, peek().column);
    }
    return take();
  }

  struct Guard {
    explicit Guard(Parser& p) : parser(p) {
      if (++parser.nesting_ > kRecursionGuard) {
        throw ParseError("nesting depth exceeds limit of " + std::to_string(kMaxDepth), parser.peek().line,
                         parser.peek().column);
      }
    }
    ~Guard() { --parser.nesting_; }
    Parser& parser;
  };

  void check_chain(int length) const {
    if (length + nesting_ > kRecursionGuard) {
      throw ParseError("expression depth exceeds limit of " + std::to_string(kMaxDepth), peek().line, peek().column);
    }
  }

  std::vector<Stmt> block() {
    expect(Tok::lbrace);
    std::vector<Stmt> body;
    while (peek().kind != Tok::rbrace) {
      if (peek().kind == Tok::end) expect(Tok::rbrace);
      body.push_back(statement());
    }
    expect(Tok::rbrace);
    return body;
  }

  Stmt statement() {
    Guard guard(*this);
    Stmt s;
    const Token& t = peek();
    switch (t.kind) {
      case Tok::identifier: {
        s.kind = StmtKind::assign;
        s.target = take().text;
        expect(Tok::assign);
        s.expr = expression();
        expect(Tok::semicolon);
        return s;
      }
      case Tok::kw_print:
        take();
        s.kind = StmtKind::print;
        expect(Tok::lparen);
        s.expr = expression();
        expect(Tok::rparen);
        expect(Tok::semicolon);
        return s;
      case Tok::kw_while:
        take();
        s.kind = StmtKind::while_loop;
        expect(Tok::lparen);
        s.expr = expression();
        expect(Tok::rparen);
        s.body = block();
        return s;
      case Tok::kw_if:
        take();
        s.kind = StmtKind::if_else;
        expect(Tok::lparen);
        s.expr = expression();
        expect(Tok::rparen);
        s.body = block();
        if (accept(Tok::kw_else)) {
          s.has_else = true;
          s.else_body = block();
        }
        return s;
      default:
        throw ParseError(std::string("expected statement, found ") + detail::describe(t.kind), t.line, t.column);
    }
  }

  Expr expression() {
    Guard guard(*this);
    return or_expr();
  }

  Expr or_expr() {
    Expr lhs = and_expr();
    for (int n = 1; accept(Tok::kw_or); ++n) {
      check_chain(n);
      lhs = Expr::binary(BinaryOp::logical_or, std::move(lhs), and_expr());
    }
    return lhs;
  }

  Expr and_expr() {
    Expr lhs = not_expr();
    for (int n = 1; accept(Tok::kw_and); ++n) {
      check_chain(n);
      lhs = Expr::binary(BinaryOp::logical_and, std::move(lhs), not_expr());
    }
    return lhs;
  }

  Expr not_expr() {
    if (accept(Tok::kw_not)) {
      Guard guard(*this);
      return Expr::unary(ExprKind::logical_not, not_expr());
    }
    return comparison();
  }

  Expr comparison() {
    Expr lhs = sum();
    BinaryOp op;
    switch (peek().kind) {
      case Tok::lt: op = BinaryOp::lt; break;
      case Tok::le: op = BinaryOp::le; break;
      case Tok::gt: op = BinaryOp::gt; break;
      case Tok::ge: op = BinaryOp::ge; break;
      case Tok::eq: op = BinaryOp::eq; break;
      case Tok::ne: op = BinaryOp::ne; break;
      default: return lhs;
    }
    take();
    return Expr::binary(op, std::move(lhs), sum());
  }

  Expr sum() {
    Expr lhs = term();
    for (int n = 1;; ++n) {
      check_chain(n);
      if (accept(Tok::plus)) {
        lhs = Expr::binary(BinaryOp::add, std::move(lhs), term());
      } else if (accept(Tok::minus)) {
        lhs = Expr::binary(BinaryOp::sub, std::move(lhs), term());
      } else {
        return lhs;
      }
    }
  }

  Expr term() {
    Expr lhs = unary();
    for (int n = 1;; ++n) {
      check_chain(n);
      if (accept(Tok::star)) {
        lhs = Expr::binary(BinaryOp::mul, std::move(lhs), unary());
      } else if (accept(Tok::slash)) {
        lhs = Expr::binary(BinaryOp::div, std::move(lhs), unary());
      } else if (accept(Tok::percent)) {
        lhs = Expr::binary(BinaryOp::mod, std::move(lhs), unary());
      } else {
        return lhs;
      }
    }
  }

  Expr unary() {
    if (accept(Tok::minus)) {
      Guard guard(*this);
      return Expr::unary(ExprKind::negate, unary());
    }
    return primary();
  }

  Expr primary() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::integer: return Expr::literal(take().value);
      case Tok::identifier: return Expr::variable(take().text);
      case Tok::input: return Expr::input(static_cast<int>(take().value));
      case Tok::lparen: {
        take();
        Expr inner = expression();
        expect(Tok::rparen);
        return inner;
      }
      default:
        throw ParseError(std::string("expected expression, found ") + detail::describe(t.kind), t.line, t.column);
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int nesting_ = 0;
};

int expr_depth(const Expr& e) {
  int d = 0;
  for (const Expr& child : e.operands) d = std::max(d, expr_depth(child));
  return d + 1;
}

int stmts_depth(const std::vector<Stmt>& stmts) {
  int d = 0;
  for (const Stmt& s : stmts) {
    int inner = expr_depth(s.expr);
    inner = std::max(inner, stmts_depth(s.body));
    inner = std::max(inner, stmts_depth(s.else_body));
    d = std::max(d, inner + 1);
  }
  return d;
}

class SlotResolver {
 public:
  void resolve(Program& p) {
    for (Stmt& s : p.statements) stmt(s);
    p.variables = order_;
  }

 private:
  int slot_of(const std::string& name) {
    auto [it, inserted] = names_.try_emplace(name, static_cast<int>(names_.size()));
    if (inserted) order_.push_back(name);
    return it->second;
  }

  void expr(Expr& e) {
    if (e.kind == ExprKind::variable) e.slot = slot_of(e.name);
    for (Expr& child : e.operands) expr(child);
  }

  void stmt(Stmt& s) {
    expr(s.expr);
    if (s.kind == StmtKind::assign) s.slot = slot_of(s.target);
    for (Stmt& b : s.body) stmt(b);
    for (Stmt& b : s.else_body) stmt(b);
  }

  std::map<std::string, int> names_;
  std::vector<std::string> order_;
};

}  // namespace

int depth(const Program& program) { return stmts_depth(program.statements); }

Program parse(std::string_view source) {
  Parser parser(detail::tokenize(source));
  Program p = parser.program();
  if (depth(p) > kMaxDepth) {
    throw ParseError("program depth " + std::to_string(depth(p)) + " exceeds limit of " + std::to_string(kMaxDepth));
  }
  SlotResolver{}.resolve(p);
  return p;
}

}  // namespace perfalign::minilang

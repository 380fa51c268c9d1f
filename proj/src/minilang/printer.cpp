#include <string>

#include "perfalign/minilang.hpp"

namespace perfalign::minilang {

namespace {

enum Prec { kOr = 1, kAnd = 2, kNot = 3, kCmp = 4, kSum = 5, kTerm = 6, kUnary = 7, kAtom = 8 };

int precedence(const Expr& e) {
  switch (e.kind) {
    case ExprKind::literal:
    case ExprKind::variable:
    case ExprKind::input:
      return kAtom;
    case ExprKind::negate:
      return kUnary;
    case ExprKind::logical_not:
      return kNot;
    case ExprKind::binary:
      switch (e.op) {
        case BinaryOp::logical_or: return kOr;
        case BinaryOp::logical_and: return kAnd;
        case BinaryOp::add:
        case BinaryOp::sub: return kSum;
        case BinaryOp::mul:
        case BinaryOp::div:
        case BinaryOp::mod: return kTerm;
        default: return kCmp;
      }
  }
  return kAtom;
}

const char* symbol(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return "+";
    case BinaryOp::sub: return "-";
    case BinaryOp::mul: return "*";
    case BinaryOp::div: return "/";
    case BinaryOp::mod: return "%";
    case BinaryOp::lt: return "<";
    case BinaryOp::le: return "<=";
    case BinaryOp::gt: return ">";
    case BinaryOp::ge: return ">=";
    case BinaryOp::eq: return "==";
    case BinaryOp::ne: return "!=";
    case BinaryOp::logical_and: return " and ";
    case BinaryOp::logical_or: return " or ";
  }
  return "?";
}

void emit(const Expr& e, std::string& out);

void emit_wrapped(const Expr& e, bool wrap, std::string& out) {
  if (wrap) out += '(';
  emit(e, out);
  if (wrap) out += ')';
}

void emit(const Expr& e, std::string& out) {
  switch (e.kind) {
    case ExprKind::literal:
      // Negative literals only arise from hand-built trees; parse yields negate(literal).
      if (e.value < 0) {
        out += "(" + std::to_string(e.value) + ")";
      } else {
        out += std::to_string(e.value);
      }
      return;
    case ExprKind::variable:
      out += e.name;
      return;
    case ExprKind::input:
      out += "in" + std::to_string(e.value);
      return;
    case ExprKind::negate:
      out += '-';
      emit_wrapped(e.operands[0], precedence(e.operands[0]) < kUnary, out);
      return;
    case ExprKind::logical_not:
      out += "not ";
      emit_wrapped(e.operands[0], precedence(e.operands[0]) < kNot, out);
      return;
    case ExprKind::binary: {
      const int p = precedence(e);
      const int lp = precedence(e.operands[0]);
      const int rp = precedence(e.operands[1]);
      // Comparisons do not chain, so either side at the same level needs parentheses.
      emit_wrapped(e.operands[0], p == kCmp ? lp <= p : lp < p, out);
      out += symbol(e.op);
      emit_wrapped(e.operands[1], rp <= p, out);
      return;
    }
  }
}

void emit(const std::vector<Stmt>& stmts, std::string& out);

void emit(const Stmt& s, std::string& out) {
  switch (s.kind) {
    case StmtKind::assign:
      out += s.target + "=";
      emit(s.expr, out);
      out += ';';
      return;
    case StmtKind::print:
      out += "print(";
      emit(s.expr, out);
      out += ");";
      return;
    case StmtKind::while_loop:
      out += "while(";
      emit(s.expr, out);
      out += "){";
      emit(s.body, out);
      out += '}';
      return;
    case StmtKind::if_else:
      out += "if(";
      emit(s.expr, out);
      out += "){";
      emit(s.body, out);
      out += '}';
      if (s.has_else) {
        out += "else{";
        emit(s.else_body, out);
        out += '}';
      }
      return;
  }
}

void emit(const std::vector<Stmt>& stmts, std::string& out) {
  for (const Stmt& s : stmts) emit(s, out);
}

}  // namespace

std::string to_source(const Expr& expr) {
  std::string out;
  emit(expr, out);
  return out;
}

std::string to_source(const Program& program) {
  std::string out;
  emit(program.statements, out);
  return out;
}

}  // namespace perfalign::minilang

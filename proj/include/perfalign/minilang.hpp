#pragma once

// minilang: a tiny integer language whose interpreter charges one cost unit per
// executed statement and per evaluated expression node. The step count is the
// runtime proxy used everywhere a "runtime" appears in this project.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace perfalign::minilang {

inline constexpr int kMaxDepth = 64;
inline constexpr int kInputSlots = 10;

enum class ExprKind { literal, variable, input, negate, logical_not, binary };

enum class BinaryOp { add, sub, mul, div, mod, lt, le, gt, ge, eq, ne, logical_and, logical_or };

struct Expr {
  ExprKind kind = ExprKind::literal;
  BinaryOp op = BinaryOp::add;
  std::int64_t value = 0;  // literal value, or input slot index
  std::string name;        // variable name
  int slot = -1;           // resolved variable slot
  std::vector<Expr> operands;

  static Expr literal(std::int64_t v);
  static Expr variable(std::string name);
  static Expr input(int index);
  static Expr unary(ExprKind kind, Expr operand);
  static Expr binary(BinaryOp op, Expr lhs, Expr rhs);
};

/// Structural equality; ignores resolved slots.
bool operator==(const Expr& a, const Expr& b);

enum class StmtKind { assign, print, while_loop, if_else };

struct Stmt {
  StmtKind kind = StmtKind::print;
  std::string target;  // assign only
  int slot = -1;
  Expr expr;  // assigned value, printed value, or condition
  std::vector<Stmt> body;
  std::vector<Stmt> else_body;
  bool has_else = false;
};

bool operator==(const Stmt& a, const Stmt& b);

struct Program {
  std::vector<Stmt> statements;
  std::vector<std::string> variables;  // slot -> name, in first-appearance order
};

bool operator==(const Program& a, const Program& b);

/// Throws ParseError with line/column on syntax errors and on depth overflow.
Program parse(std::string_view source);

/// Canonical compact rendering; parse(to_source(p)) == p.
std::string to_source(const Program& program);
std::string to_source(const Expr& expr);

/// Nesting depth of statements and expressions (a lone literal print is depth 2).
int depth(const Program& program);

enum class ExecStatus { ok, runtime_error, step_limit_exceeded };

struct ExecOutcome {
  ExecStatus status = ExecStatus::ok;
  std::vector<std::int64_t> outputs;
  std::uint64_t steps = 0;
  std::string message;

  friend bool operator==(const ExecOutcome&, const ExecOutcome&) = default;
};

/// Deterministic execution under a step budget; never throws for program faults.
ExecOutcome run(const Program& program, std::span<const std::int64_t> inputs, std::uint64_t step_limit);

/// Whitespace-separated integers, as stored in test-case inputs/outputs.
std::vector<std::int64_t> parse_integers(std::string_view text);
std::string format_outputs(std::span<const std::int64_t> outputs);

const char* to_string(ExecStatus status);

}  // namespace perfalign::minilang

#include <array>
#include <cctype>
#include <charconv>
#include <limits>
#include <optional>

#include "perfalign/error.hpp"
#include "perfalign/minilang.hpp"

namespace perfalign::minilang {

namespace {

struct StepLimitHit {};

struct RuntimeFault {
  std::string message;
};

class Machine {
 public:
  Machine(const Program& program, std::span<const std::int64_t> inputs, std::uint64_t limit)
      : vars_(program.variables.size()), limit_(limit) {
    for (std::size_t i = 0; i < inputs.size() && i < kInputSlots; ++i) inputs_[i] = inputs[i];
  }

  void exec(const std::vector<Stmt>& stmts) {
    for (const Stmt& s : stmts) exec(s);
  }

  std::vector<std::int64_t> outputs;
  std::uint64_t steps = 0;

 private:
  void charge() {
    if (steps >= limit_) throw StepLimitHit{};
    ++steps;
  }

  void exec(const Stmt& s) {
    charge();
    switch (s.kind) {
      case StmtKind::assign:
        vars_[static_cast<std::size_t>(s.slot)] = eval(s.expr);
        return;
      case StmtKind::print:
        outputs.push_back(eval(s.expr));
        return;
      case StmtKind::while_loop:
        while (eval(s.expr) != 0) exec(s.body);
        return;
      case StmtKind::if_else:
        if (eval(s.expr) != 0) {
          exec(s.body);
        } else if (s.has_else) {
          exec(s.else_body);
        }
        return;
    }
  }

  std::int64_t eval(const Expr& e) {
    charge();
    switch (e.kind) {
      case ExprKind::literal:
        return e.value;
      case ExprKind::variable: {
        const auto& v = vars_[static_cast<std::size_t>(e.slot)];
        if (!v) throw RuntimeFault{"read of unassigned variable '" + e.name + "'"};
        return *v;
      }
      case ExprKind::input: {
        const auto& v = inputs_[static_cast<std::size_t>(e.value)];
        if (!v) throw RuntimeFault{"read of missing input in" + std::to_string(e.value)};
        return *v;
      }
      case ExprKind::negate: {
        const std::int64_t x = eval(e.operands[0]);
        if (x == std::numeric_limits<std::int64_t>::min()) throw RuntimeFault{"integer overflow"};
        return -x;
      }
      case ExprKind::logical_not:
        return eval(e.operands[0]) == 0 ? 1 : 0;
      case ExprKind::binary:
        return binary(e);
    }
    return 0;
  }

  std::int64_t binary(const Expr& e) {
    // and/or short-circuit: the right operand is neither evaluated nor charged.
    if (e.op == BinaryOp::logical_and) {
      if (eval(e.operands[0]) == 0) return 0;
      return eval(e.operands[1]) != 0 ? 1 : 0;
    }
    if (e.op == BinaryOp::logical_or) {
      if (eval(e.operands[0]) != 0) return 1;
      return eval(e.operands[1]) != 0 ? 1 : 0;
    }
    const std::int64_t a = eval(e.operands[0]);
    const std::int64_t b = eval(e.operands[1]);
    std::int64_t r = 0;
    switch (e.op) {
      case BinaryOp::add:
        if (__builtin_add_overflow(a, b, &r)) throw RuntimeFault{"integer overflow"};
        return r;
      case BinaryOp::sub:
        if (__builtin_sub_overflow(a, b, &r)) throw RuntimeFault{"integer overflow"};
        return r;
      case BinaryOp::mul:
        if (__builtin_mul_overflow(a, b, &r)) throw RuntimeFault{"integer overflow"};
        return r;
      case BinaryOp::div:
      case BinaryOp::mod:
        if (b == 0) throw RuntimeFault{"division by zero"};
        if (a == std::numeric_limits<std::int64_t>::min() && b == -1) throw RuntimeFault{"integer overflow"};
        return e.op == BinaryOp::div ? a / b : a % b;
      case BinaryOp::lt: return a < b;
      case BinaryOp::le: return a <= b;
      case BinaryOp::gt: return a > b;
      case BinaryOp::ge: return a >= b;
      case BinaryOp::eq: return a == b;
      case BinaryOp::ne: return a != b;
      default: return 0;
    }
  }

  std::vector<std::optional<std::int64_t>> vars_;
  std::array<std::optional<std::int64_t>, kInputSlots> inputs_{};
  std::uint64_t limit_;
};

}  // namespace

ExecOutcome run(const Program& program, std::span<const std::int64_t> inputs, std::uint64_t step_limit) {
  if (step_limit == 0) throw DomainError("step_limit must be at least 1");
  Machine m(program, inputs, step_limit);
  ExecOutcome out;
  try {
    m.exec(program.statements);
    out.status = ExecStatus::ok;
  } catch (const StepLimitHit&) {
    out.status = ExecStatus::step_limit_exceeded;
    out.message = "step limit " + std::to_string(step_limit) + " exceeded";
  } catch (const RuntimeFault& fault) {
    out.status = ExecStatus::runtime_error;
    out.message = fault.message;
  }
  out.outputs = std::move(m.outputs);
  out.steps = m.steps;
  return out;
}

std::vector<std::int64_t> parse_integers(std::string_view text) {
  std::vector<std::int64_t> values;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + j, v);
    if (ec != std::errc{} || ptr != text.data() + j) {
      throw ParseError("not an integer: '" + std::string(text.substr(i, j - i)) + "'");
    }
    values.push_back(v);
    i = j;
  }
  return values;
}

std::string format_outputs(std::span<const std::int64_t> outputs) {
  std::string s;
  for (std::int64_t v : outputs) {
    s += std::to_string(v);
    s += '\n';
  }
  return s;
}

const char* to_string(ExecStatus status) {
  switch (status) {
    case ExecStatus::ok: return "ok";
    case ExecStatus::runtime_error: return "runtime_error";
    case ExecStatus::step_limit_exceeded: return "step_limit_exceeded";
  }
  return "unknown";
}

}  // namespace perfalign::minilang

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "perfalign/executor.hpp"

namespace fixtures {

// Triangle numbers for inputs 1, 2, 3.
inline perfalign::Problem triangle_problem() {
  perfalign::Problem p;
  p.id = "triangle";
  p.statement = "Print in0*(in0+1)/2.";
  p.tests = {{"1", "1"}, {"2", "3"}, {"3", "6\n"}};
  p.step_limit = 1000;
  return p;
}

struct ExecCase {
  const char* name;
  perfalign::ExecBackend backend;
  std::string code;
  perfalign::VerdictStatus status;
  std::vector<bool> passed;
  std::optional<double> avg_runtime;  // exact for minilang
};

inline perfalign::ProcessBackend shell_backend() {
  perfalign::ProcessBackend b;
  b.command = "sh {src}";
  b.wall_limit_ms = 5000;
  b.repeat = 2;
  return b;
}

// Step counts by hand: the closed form costs 1 + 7 per test; the loop costs
// 10 + 11n, i.e. 21, 32, 43.
inline std::vector<ExecCase> exec_cases() {
  using perfalign::MinilangBackend;
  using S = perfalign::VerdictStatus;
  return {
      {"closed form", MinilangBackend{}, "print(in0*(in0+1)/2);", S::correct, {true, true, true}, 8.0},
      {"loop", MinilangBackend{}, "s=0;i=1;while(i<=in0){s=s+i;i=i+1;}print(s);", S::correct, {true, true, true}, 32.0},
      {"wrong on test 2", MinilangBackend{}, "if (in0 == 2) { print(0); } else { print(in0*(in0+1)/2); }",
       S::wrong_output, {true, false, true}, std::nullopt},
      {"identity", MinilangBackend{}, "print(in0);", S::wrong_output, {true, false, false}, std::nullopt},
      {"extra output", MinilangBackend{}, "print(in0*(in0+1)/2); print(0);", S::wrong_output, {false, false, false},
       std::nullopt},
      {"infinite loop", MinilangBackend{}, "while (1 < 2) { }", S::timeout, {false, false, false}, std::nullopt},
      {"loops on test 3", MinilangBackend{}, "if (in0 == 3) { while (1 < 2) { } } print(in0*(in0+1)/2);", S::timeout,
       {true, true, false}, std::nullopt},
      {"division by zero", MinilangBackend{}, "print(in0 / 0);", S::error, {false, false, false}, std::nullopt},
      {"unassigned variable", MinilangBackend{}, "print(y);", S::error, {false, false, false}, std::nullopt},
      {"syntax error", MinilangBackend{}, "print(", S::error, {false, false, false}, std::nullopt},
      {"shell correct", shell_backend(), "read x\necho \"$((x*(x+1)/2))  \"\n", S::correct, {true, true, true},
       std::nullopt},
      {"shell nonzero exit", shell_backend(), "exit 3\n", S::error, {false, false, false}, std::nullopt},
  };
}

}  // namespace fixtures

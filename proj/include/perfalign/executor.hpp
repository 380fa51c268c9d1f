#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "perfalign/corpus.hpp"

namespace perfalign {

enum class VerdictStatus { correct, wrong_output, error, timeout };

const char* to_string(VerdictStatus status);

struct TestResult {
  bool passed = false;
  double runtime = 0.0;
  std::string note;
  VerdictStatus outcome = VerdictStatus::error;  // correct iff passed
};

struct Verdict {
  VerdictStatus status = VerdictStatus::error;
  std::vector<TestResult> per_test;
  std::optional<double> avg_runtime;  // present iff status == correct
  /// The backend itself failed (launch/compile infrastructure), not the program.
  bool infra_failure = false;
  std::string note;
};

/// Deterministic: runtime is the interpreter step count.
struct MinilangBackend {};

/// Runs an external command per test. Placeholders: {src}, {input_file}, {bin}.
/// Runtime is wall-clock milliseconds of the child, averaged over `repeat` runs.
struct ProcessBackend {
  std::string command;
  std::string compile_command;  // optional, run once per evaluation
  std::uint64_t wall_limit_ms = 0;  // 0: use the problem's step_limit as milliseconds
  std::uint64_t memory_limit_mb = 1024;
  int repeat = 5;
};

using ExecBackend = std::variant<MinilangBackend, ProcessBackend>;

/// Runs every test (no short-circuit). Verdicts are data: nothing here throws
/// for a faulty program or a failed launch.
Verdict evaluate(std::string_view source_code, const Problem& problem, const ExecBackend& backend);
Verdict evaluate(const Solution& solution, const Problem& problem, const ExecBackend& backend);

/// Exact after stripping trailing whitespace (including the final newline).
bool outputs_match(std::string_view actual, std::string_view expected);

struct ProblemStats {
  std::string problem_id;
  std::vector<double> runtimes;  // sorted
  double median_runtime = 0.0;
};

struct LabelSummary {
  std::vector<ProblemStats> stats;
  std::size_t evaluated = 0;
  std::size_t relabeled_incorrect = 0;
  std::vector<std::string> failures;  // "submission_id: reason"
};

/// Executes unverified and claimed-correct solutions of contest problems,
/// records runtimes, relabels failures as incorrect and fills median_runtime.
/// Results are independent of `workers`.
Corpus label_corpus(const Corpus& corpus, const ExecBackend& backend, unsigned workers = 1,
                    LabelSummary* summary = nullptr);

/// Median with the even-count rule (mean of the two central values). Empty input throws DomainError.
double median(std::span<const double> values);

/// baseline / runtime; throws DomainError when runtime is not positive.
double speedup(double baseline_runtime, double runtime);

namespace detail {

struct ProcessRun {
  int exit_code = -1;
  bool timed_out = false;
  bool launch_failed = false;
  std::string stdout_text;
  double elapsed_ms = 0.0;
};

/// Sets status and avg_runtime from per_test (timeout > error > wrong_output).
void finalize_verdict(Verdict& v);

ProcessRun run_process(const std::string& shell_command, const std::string& stdin_path, std::uint64_t wall_limit_ms,
                       std::uint64_t memory_limit_mb);

}  // namespace detail

}  // namespace perfalign

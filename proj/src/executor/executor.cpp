#include "perfalign/executor.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "perfalign/error.hpp"
#include "perfalign/minilang.hpp"

namespace perfalign {

const char* to_string(VerdictStatus status) {
  switch (status) {
    case VerdictStatus::correct: return "correct";
    case VerdictStatus::wrong_output: return "wrong_output";
    case VerdictStatus::error: return "error";
    case VerdictStatus::timeout: return "timeout";
  }
  return "?";
}

bool outputs_match(std::string_view actual, std::string_view expected) {
  auto rstrip = [](std::string_view s) {
    const auto end = s.find_last_not_of(" \t\r\n");
    return end == std::string_view::npos ? std::string_view{} : s.substr(0, end + 1);
  };
  return rstrip(actual) == rstrip(expected);
}

namespace detail {

void finalize_verdict(Verdict& v) {
  bool any_timeout = false;
  bool any_error = false;
  bool any_wrong = false;
  for (const auto& t : v.per_test) {
    if (t.passed) continue;
    any_timeout |= t.outcome == VerdictStatus::timeout;
    any_error |= t.outcome == VerdictStatus::error;
    any_wrong |= t.outcome == VerdictStatus::wrong_output;
  }
  if (any_timeout) {
    v.status = VerdictStatus::timeout;
  } else if (any_error) {
    v.status = VerdictStatus::error;
  } else if (any_wrong) {
    v.status = VerdictStatus::wrong_output;
  } else {
    v.status = VerdictStatus::correct;
    double sum = 0.0;
    for (const auto& t : v.per_test) sum += t.runtime;
    v.avg_runtime = sum / static_cast<double>(v.per_test.size());
  }
}

}  // namespace detail

namespace {

Verdict evaluate_minilang(std::string_view code, const Problem& problem) {
  Verdict v;
  minilang::Program program;
  try {
    program = minilang::parse(code);
  } catch (const ParseError& e) {
    v.status = VerdictStatus::error;
    v.note = std::string("error: ") + e.what();
    for (std::size_t i = 0; i < problem.tests.size(); ++i) {
      v.per_test.push_back({false, 0.0, v.note, VerdictStatus::error});
    }
    return v;
  }

  for (const TestCase& test : problem.tests) {
    TestResult r;
    std::vector<std::int64_t> inputs;
    try {
      inputs = minilang::parse_integers(test.input);
    } catch (const ParseError& e) {
      r.note = std::string("error: bad test input: ") + e.what();
      v.per_test.push_back(std::move(r));
      continue;
    }
    const auto outcome = minilang::run(program, inputs, problem.step_limit);
    r.runtime = static_cast<double>(outcome.steps);
    switch (outcome.status) {
      case minilang::ExecStatus::ok:
        r.passed = outputs_match(minilang::format_outputs(outcome.outputs), test.expected_output);
        r.outcome = r.passed ? VerdictStatus::correct : VerdictStatus::wrong_output;
        if (!r.passed) r.note = "wrong output";
        break;
      case minilang::ExecStatus::runtime_error:
        r.note = "error: " + outcome.message;
        r.outcome = VerdictStatus::error;
        break;
      case minilang::ExecStatus::step_limit_exceeded:
        r.note = "timeout: " + outcome.message;
        r.outcome = VerdictStatus::timeout;
        break;
    }
    v.per_test.push_back(std::move(r));
  }
  detail::finalize_verdict(v);
  return v;
}

}  // namespace

Verdict evaluate_process(std::string_view code, const Problem& problem, const ProcessBackend& backend);

Verdict evaluate(std::string_view source_code, const Problem& problem, const ExecBackend& backend) {
  if (problem.tests.empty()) throw DomainError("problem '" + problem.id + "' has no test cases");
  if (const auto* proc = std::get_if<ProcessBackend>(&backend)) return evaluate_process(source_code, problem, *proc);
  return evaluate_minilang(source_code, problem);
}

Verdict evaluate(const Solution& solution, const Problem& problem, const ExecBackend& backend) {
  return evaluate(solution.source_code, problem, backend);
}

double median(std::span<const double> values) {
  if (values.empty()) throw DomainError("median of an empty set");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lower + upper) / 2.0;
}

double speedup(double baseline_runtime, double runtime) {
  if (!(runtime > 0.0)) throw DomainError("speedup needs a positive runtime, got " + std::to_string(runtime));
  return baseline_runtime / runtime;
}

Corpus label_corpus(const Corpus& corpus, const ExecBackend& backend, unsigned workers, LabelSummary* summary) {
  std::vector<Problem> problems = corpus.problems();
  std::vector<Solution> solutions = corpus.solutions();

  // Synthetic pairs carry no verified runtimes; upstream "incorrect" labels are kept.
  std::vector<std::size_t> jobs;
  for (std::size_t i = 0; i < solutions.size(); ++i) {
    const Problem& p = corpus.problem(solutions[i].problem_id);
    if (p.source != ProblemSource::contest) continue;
    if (solutions[i].label == SolutionLabel::incorrect) continue;
    jobs.push_back(i);
  }

  std::vector<Verdict> verdicts(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      const Solution& s = solutions[jobs[k]];
      verdicts[k] = evaluate(s, corpus.problem(s.problem_id), backend);
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(jobs.size())));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  LabelSummary local;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    Solution& s = solutions[jobs[k]];
    const Verdict& v = verdicts[k];
    ++local.evaluated;
    if (v.status == VerdictStatus::correct) {
      s.label = SolutionLabel::correct;
      s.runtime = *v.avg_runtime;
    } else {
      if (s.label == SolutionLabel::correct) ++local.relabeled_incorrect;
      s.label = SolutionLabel::incorrect;
      s.runtime.reset();
      std::string reason = to_string(v.status);
      for (const auto& t : v.per_test) {
        if (!t.passed) {
          reason += " (" + t.note + ")";
          break;
        }
      }
      local.failures.push_back(s.submission_id + ": " + reason);
    }
  }

  Corpus labeled(problems, solutions);
  for (Problem& p : problems) {
    if (p.source != ProblemSource::contest) continue;
    ProblemStats stats;
    stats.problem_id = p.id;
    for (std::size_t i : labeled.solutions_of(p.id)) {
      const Solution& s = solutions[i];
      if (s.label == SolutionLabel::correct && s.runtime) stats.runtimes.push_back(*s.runtime);
    }
    std::sort(stats.runtimes.begin(), stats.runtimes.end());
    if (stats.runtimes.empty()) {
      p.median_runtime.reset();
      continue;
    }
    stats.median_runtime = median(stats.runtimes);
    p.median_runtime = stats.median_runtime;
    local.stats.push_back(std::move(stats));
  }
  if (summary != nullptr) *summary = std::move(local);
  return Corpus(std::move(problems), std::move(solutions));
}

}  // namespace perfalign

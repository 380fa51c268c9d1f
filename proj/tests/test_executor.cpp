#include <algorithm>

#include "doctest.h"
#include "executor_fixtures.hpp"
#include "perfalign/error.hpp"
#include "perfalign/pipeline.hpp"
#include "perfalign/rng.hpp"

using namespace perfalign;

TEST_CASE("verdict truth table") {
  const Problem p = fixtures::triangle_problem();
  for (const auto& c : fixtures::exec_cases()) {
    INFO(c.name);
    const Verdict v = evaluate(c.code, p, c.backend);
    CHECK(v.status == c.status);
    REQUIRE(v.per_test.size() == c.passed.size());
    for (std::size_t i = 0; i < c.passed.size(); ++i) CHECK(v.per_test[i].passed == c.passed[i]);
    CHECK(v.avg_runtime.has_value() == (c.status == VerdictStatus::correct));
    if (c.avg_runtime) CHECK(*v.avg_runtime == *c.avg_runtime);
    if (v.avg_runtime) {
      double sum = 0;
      for (const auto& t : v.per_test) sum += t.runtime;
      CHECK(*v.avg_runtime == doctest::Approx(sum / double(v.per_test.size())).epsilon(1e-12));
    }
    CHECK_FALSE(v.infra_failure);
  }
}

TEST_CASE("missing interpreter is an infrastructure failure") {
  ProcessBackend b = fixtures::shell_backend();
  b.command = "/nonexistent/interpreter {src}";
  const Verdict v = evaluate("print(1);", fixtures::triangle_problem(), b);
  CHECK(v.status == VerdictStatus::error);
  CHECK(v.infra_failure);
}

TEST_CASE("process backend wall limit") {
  ProcessBackend b = fixtures::shell_backend();
  b.wall_limit_ms = 200;
  b.repeat = 1;
  Problem p = fixtures::triangle_problem();
  p.tests.resize(1);
  CHECK(evaluate("sleep 5\n", p, b).status == VerdictStatus::timeout);
}

TEST_CASE("output comparison") {
  CHECK(outputs_match("6\n", "6"));
  CHECK(outputs_match("1 2  \n\n", "1 2"));
  CHECK_FALSE(outputs_match("1  2", "1 2"));
  CHECK_FALSE(outputs_match(" 6", "6"));
}

TEST_CASE("median and speedup") {
  const std::vector<double> odd{9, 2, 4}, even{4, 2};
  CHECK(median(odd) == 4.0);
  CHECK(median(even) == 3.0);
  CHECK_THROWS_AS(median(std::span<const double>{}), DomainError);
  CHECK(speedup(10, 2) == 5.0);
  CHECK(speedup(4, 4) == 1.0);
  CHECK_THROWS_AS(speedup(3, 0), DomainError);

  Rng rng(5);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> v(1 + rng.below(12));
    for (double& x : v) x = static_cast<double>(rng.below(20));
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double oracle = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
    CHECK(median(v) == oracle);
  }
}

TEST_CASE("label_corpus fills runtimes and medians") {
  Problem p;
  p.id = "echo";
  p.statement = "Echo in0.";
  p.tests = {{"5", "5"}};
  auto sol = [](const char* sid, const char* code, SolutionLabel label) {
    return Solution{"echo", sid, code, label, std::nullopt, PairRole::none};
  };
  // 2 and 4 steps; the third divides by zero although it claims to be correct.
  const Corpus c({p}, {sol("a", "print(in0);", SolutionLabel::unverified),
                       sol("b", "x=in0;print(x);", SolutionLabel::unverified),
                       sol("c", "print(in0/0);", SolutionLabel::correct)});
  LabelSummary summary;
  const Corpus labeled = label_corpus(c, MinilangBackend{}, 1, &summary);
  CHECK(*labeled.problem("echo").median_runtime == 3.0);
  CHECK(labeled.solutions()[0].label == SolutionLabel::correct);
  CHECK(*labeled.solutions()[0].runtime == 2.0);
  CHECK(*labeled.solutions()[1].runtime == 4.0);
  CHECK(labeled.solutions()[2].label == SolutionLabel::incorrect);
  CHECK_FALSE(labeled.solutions()[2].runtime.has_value());
  CHECK(summary.relabeled_incorrect == 1);
  REQUIRE(summary.stats.size() == 1);
  CHECK(summary.stats[0].runtimes == std::vector<double>{2, 4});
}

TEST_CASE("labeling is idempotent and independent of worker count") {
  ToyCorpusOptions opt;
  opt.contest_problems = 30;
  opt.synthetic_problems = 5;
  const Corpus toy = make_toy_corpus(opt);
  const Corpus one = label_corpus(toy, MinilangBackend{}, 1);
  const Corpus many = label_corpus(toy, MinilangBackend{}, 4);
  CHECK(serialize_corpus(one) == serialize_corpus(many));
  CHECK(serialize_corpus(label_corpus(one, MinilangBackend{}, 2)) == serialize_corpus(one));
}

TEST_CASE("toy corpus solutions behave as designed") {
  const Corpus labeled = label_corpus(make_toy_corpus(), MinilangBackend{}, 1);
  for (const auto& s : labeled.solutions()) {
    const Problem& p = labeled.problem(s.problem_id);
    if (p.source == ProblemSource::synthetic) continue;
    const std::string tag = s.submission_id.substr(s.submission_id.rfind('/') + 1);
    INFO(s.submission_id);
    CHECK((s.label == SolutionLabel::incorrect) == (tag[0] == 'e'));
  }
  // Closed forms are the fastest correct solutions of their problem.
  for (const auto& p : labeled.problems()) {
    if (p.source == ProblemSource::synthetic) continue;
    double closed = 0, loops = 1e300;
    for (std::size_t i : labeled.solutions_of(p.id)) {
      const Solution& s = labeled.solutions()[i];
      if (s.label != SolutionLabel::correct) continue;
      const char kind = s.submission_id[s.submission_id.rfind('/') + 1];
      if (kind == 'f') closed = std::max(closed, *s.runtime);
      else loops = std::min(loops, *s.runtime);
    }
    CHECK(closed < loops);
  }
}

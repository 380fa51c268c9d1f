#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace perfalign {

/// Unbiased pass@k from N samples with c correct: 1 - C(N-c, k) / C(N, k).
/// Throws DomainError unless 0 <= c <= N and 1 <= k <= N.
double pass_at_k(int n, int c, int k);

struct SampleOutcome {
  bool correct = false;
  double runtime = 0.0;  // ignored when !correct
};

/// Expected maximum speedup baseline/runtime over a uniform k-subset of the
/// samples; incorrect samples count as speedup 0.
double speedup_n_at_k(std::span<const SampleOutcome> samples, double baseline, int k);

struct SampleResult {
  std::string problem_id;
  int index = 1;  // 1-based within the problem
  bool correct = false;
  std::optional<double> runtime;  // present iff correct
  int processors = 1;
  std::string code;
};

struct ProblemSamples {
  std::string problem_id;
  double baseline = 0.0;
  std::vector<SampleResult> samples;
};

struct MetricRow {
  int k = 1;
  double pass = 0.0;
  double speedup = 0.0;
};

struct EvalReport {
  std::vector<ProblemSamples> problems;
  std::vector<MetricRow> metrics;
};

/// Averages both estimators over problems for each requested k.
EvalReport aggregate(std::vector<ProblemSamples> problems, std::span<const int> ks);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);
/// One row per (k, metric) for plotting.
std::string report_to_csv(const EvalReport& report);

}  // namespace perfalign

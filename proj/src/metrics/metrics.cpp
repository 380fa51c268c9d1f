#include "perfalign/metrics.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"
#include "perfalign/error.hpp"

namespace perfalign {

double pass_at_k(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n) throw DomainError("pass@k needs 0 <= c <= N and N >= 1");
  if (k < 1 || k > n) throw DomainError("pass@k needs 1 <= k <= N, got k=" + std::to_string(k));
  if (n - c < k) return 1.0;
  // C(N-c, k) / C(N, k) = prod_{i=N-c+1}^{N} (1 - k / i)
  double fail = 1.0;
  for (int i = n - c + 1; i <= n; ++i) fail *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  return 1.0 - fail;
}

double speedup_n_at_k(std::span<const SampleOutcome> samples, double baseline, int k) {
  const int n = static_cast<int>(samples.size());
  if (k < 1 || k > n) throw DomainError("speedup@k needs 1 <= k <= N, got k=" + std::to_string(k));
  if (!(baseline > 0.0)) throw DomainError("speedup@k needs a positive baseline");

  std::vector<double> speedups;
  speedups.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.correct) {
      speedups.push_back(0.0);
    } else {
      if (!(s.runtime > 0.0)) throw DomainError("correct sample with nonpositive runtime");
      speedups.push_back(baseline / s.runtime);
    }
  }
  std::sort(speedups.begin(), speedups.end());

  // Weight of the j-th smallest (1-based) is C(j-1, k-1) / C(N, k). Start from
  // w_N = k / N and walk down with w_{j-1} = w_j * (j - k) / (j - 1).
  double total = 0.0;
  double w = static_cast<double>(k) / static_cast<double>(n);
  for (int j = n; j >= k; --j) {
    total += w * speedups[static_cast<std::size_t>(j - 1)];
    if (j > 1) w *= static_cast<double>(j - k) / static_cast<double>(j - 1);
  }
  return total;
}

EvalReport aggregate(std::vector<ProblemSamples> problems, std::span<const int> ks) {
  EvalReport report;
  for (const auto& p : problems) {
    std::set<int> seen;
    for (const auto& s : p.samples) {
      if (s.index < 1 || s.index > static_cast<int>(p.samples.size()) || !seen.insert(s.index).second) {
        throw DomainError("problem '" + p.problem_id + "' has inconsistent sample indices");
      }
      if (s.correct != s.runtime.has_value()) {
        throw DomainError("problem '" + p.problem_id + "' sample " + std::to_string(s.index) +
                          ": runtime must be present iff correct");
      }
    }
  }
  for (int k : ks) {
    MetricRow row;
    row.k = k;
    if (!problems.empty()) {
      for (const auto& p : problems) {
        const int n = static_cast<int>(p.samples.size());
        int c = 0;
        std::vector<SampleOutcome> outcomes;
        for (const auto& s : p.samples) {
          c += s.correct ? 1 : 0;
          outcomes.push_back({s.correct, s.runtime.value_or(0.0)});
        }
        row.pass += pass_at_k(n, c, k);
        row.speedup += speedup_n_at_k(outcomes, p.baseline, k);
      }
      row.pass /= static_cast<double>(problems.size());
      row.speedup /= static_cast<double>(problems.size());
    }
    report.metrics.push_back(row);
  }
  report.problems = std::move(problems);
  return report;
}

std::string report_to_json(const EvalReport& report) {
  using nlohmann::json;
  json problems = json::array();
  for (const auto& p : report.problems) {
    json samples = json::array();
    for (const auto& s : p.samples) {
      json js{{"index", s.index}, {"correct", s.correct}, {"processors", s.processors}, {"code", s.code}};
      js["runtime"] = s.runtime ? json(*s.runtime) : json(nullptr);
      samples.push_back(std::move(js));
    }
    problems.push_back({{"id", p.problem_id}, {"baseline", p.baseline}, {"samples", samples}});
  }
  json metrics = json::array();
  for (const auto& m : report.metrics) metrics.push_back({{"k", m.k}, {"pass", m.pass}, {"speedup", m.speedup}});
  return json{{"problems", problems}, {"metrics", metrics}}.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text) {
  EvalReport report;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& jp : j.at("problems")) {
      ProblemSamples p;
      p.problem_id = jp.at("id").get<std::string>();
      p.baseline = jp.at("baseline").get<double>();
      for (const auto& js : jp.at("samples")) {
        SampleResult s;
        s.problem_id = p.problem_id;
        s.index = js.at("index").get<int>();
        s.correct = js.at("correct").get<bool>();
        s.processors = js.value("processors", 1);
        s.code = js.value("code", "");
        if (!js.at("runtime").is_null()) s.runtime = js.at("runtime").get<double>();
        p.samples.push_back(std::move(s));
      }
      report.problems.push_back(std::move(p));
    }
    for (const auto& jm : j.value("metrics", nlohmann::json::array())) {
      report.metrics.push_back({jm.at("k").get<int>(), jm.at("pass").get<double>(), jm.at("speedup").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
  return report;
}

std::string report_to_csv(const EvalReport& report) {
  std::string out = "k,metric,value\n";
  for (const auto& m : report.metrics) {
    out += std::to_string(m.k) + ",pass," + nlohmann::json(m.pass).dump() + "\n";
    out += std::to_string(m.k) + ",speedup," + nlohmann::json(m.speedup).dump() + "\n";
  }
  return out;
}

}  // namespace perfalign

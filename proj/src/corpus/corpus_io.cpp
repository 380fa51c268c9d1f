#include <fstream>
#include <sstream>

#include "json.hpp"
#include "perfalign/corpus.hpp"
#include "perfalign/error.hpp"
#include "json_records.hpp"

namespace perfalign {

using nlohmann::json;

Corpus::Corpus(std::vector<Problem> problems, std::vector<Solution> solutions)
    : problems_(std::move(problems)), solutions_(std::move(solutions)) {
  reindex();
}

void Corpus::reindex() {
  index_.clear();
  by_problem_.clear();
  for (std::size_t i = 0; i < problems_.size(); ++i) {
    if (!index_.emplace(problems_[i].id, i).second) {
      throw IntegrityError("duplicate problem id '" + problems_[i].id + "'");
    }
  }
  for (std::size_t i = 0; i < solutions_.size(); ++i) {
    const auto& pid = solutions_[i].problem_id;
    if (!index_.contains(pid)) {
      throw IntegrityError("solution '" + solutions_[i].submission_id + "' references unknown problem '" + pid + "'");
    }
    by_problem_[pid].push_back(i);
  }
}

const Problem* Corpus::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &problems_[it->second];
}

const Problem& Corpus::problem(std::string_view id) const {
  const Problem* p = find(id);
  if (p == nullptr) throw IntegrityError("unknown problem '" + std::string(id) + "'");
  return *p;
}

std::vector<std::size_t> Corpus::solutions_of(std::string_view problem_id) const {
  auto it = by_problem_.find(std::string(problem_id));
  return it == by_problem_.end() ? std::vector<std::size_t>{} : it->second;
}

namespace {

const char* label_name(SolutionLabel label) {
  switch (label) {
    case SolutionLabel::correct: return "correct";
    case SolutionLabel::incorrect: return "incorrect";
    case SolutionLabel::unverified: return "unverified";
  }
  return "unverified";
}

SolutionLabel parse_label(const std::string& s) {
  if (s == "correct") return SolutionLabel::correct;
  if (s == "incorrect") return SolutionLabel::incorrect;
  if (s == "unverified") return SolutionLabel::unverified;
  throw ParseError("unknown solution label '" + s + "'");
}

Problem problem_from_json(const json& j) {
  Problem p;
  p.id = j.at("id").get<std::string>();
  p.statement = j.at("statement").get<std::string>();
  if (j.contains("tests")) {
    for (const auto& t : j.at("tests")) {
      p.tests.push_back({t.at("input").get<std::string>(), t.at("output").get<std::string>()});
    }
  }
  if (j.contains("step_limit")) p.step_limit = j.at("step_limit").get<std::uint64_t>();
  if (p.step_limit == 0) throw ParseError("step_limit must be positive");
  const std::string source = j.value("source", "contest");
  if (source == "contest") {
    p.source = ProblemSource::contest;
  } else if (source == "synthetic") {
    p.source = ProblemSource::synthetic;
  } else {
    throw ParseError("unknown problem source '" + source + "'");
  }
  if (p.source == ProblemSource::contest && p.tests.empty()) {
    throw ParseError("contest problem '" + p.id + "' has no test cases");
  }
  if (j.contains("median_runtime") && !j.at("median_runtime").is_null()) {
    p.median_runtime = j.at("median_runtime").get<double>();
  }
  return p;
}

Solution solution_from_json(const json& j, std::size_t ordinal) {
  Solution s;
  s.problem_id = j.at("problem_id").get<std::string>();
  s.source_code = j.at("code").get<std::string>();
  s.submission_id = j.value("submission_id", s.problem_id + "/" + std::to_string(ordinal));
  s.label = parse_label(j.value("label", "unverified"));
  if (j.contains("runtime") && !j.at("runtime").is_null()) {
    if (s.label != SolutionLabel::correct) throw ParseError("runtime given for a solution not labeled correct");
    s.runtime = j.at("runtime").get<double>();
    if (*s.runtime < 0) throw ParseError("negative runtime");
  }
  const std::string role = j.value("role", "");
  if (role == "fast") {
    s.role = PairRole::fast;
  } else if (role == "slow") {
    s.role = PairRole::slow;
  } else if (!role.empty()) {
    throw ParseError("unknown solution role '" + role + "'");
  }
  return s;
}

}  // namespace

json to_json(const Solution& s) {
  json j{{"kind", "solution"},
         {"problem_id", s.problem_id},
         {"submission_id", s.submission_id},
         {"code", s.source_code},
         {"label", label_name(s.label)}};
  if (s.runtime) j["runtime"] = *s.runtime;
  if (s.role == PairRole::fast) j["role"] = "fast";
  if (s.role == PairRole::slow) j["role"] = "slow";
  return j;
}

Solution solution_from_json_record(const json& j) { return solution_from_json(j, 0); }

Corpus parse_corpus(std::string_view jsonl) {
  std::vector<Problem> problems;
  std::vector<Solution> solutions;
  std::unordered_map<std::string, std::size_t> ordinals;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "problem") {
        problems.push_back(problem_from_json(j));
      } else if (kind == "solution") {
        const std::string pid = j.at("problem_id").get<std::string>();
        solutions.push_back(solution_from_json(j, ordinals[pid]++));
      } else {
        throw ParseError("unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed corpus record: ") + e.what(), line_no);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return Corpus(std::move(problems), std::move(solutions));
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_corpus(ss.str());
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const Problem& p : corpus.problems()) {
    json tests = json::array();
    for (const auto& t : p.tests) tests.push_back({{"input", t.input}, {"output", t.expected_output}});
    json j{{"kind", "problem"},
           {"id", p.id},
           {"statement", p.statement},
           {"tests", tests},
           {"step_limit", p.step_limit},
           {"source", p.source == ProblemSource::contest ? "contest" : "synthetic"}};
    if (p.median_runtime) j["median_runtime"] = *p.median_runtime;
    out += j.dump() + "\n";
  }
  for (const Solution& s : corpus.solutions()) out += to_json(s).dump() + "\n";
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus file " + path.string());
  out << serialize_corpus(corpus);
}

}  // namespace perfalign

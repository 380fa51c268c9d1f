#include <algorithm>

#include "perfalign/corpus.hpp"
#include "perfalign/rng.hpp"
#include "ranking.hpp"

namespace perfalign {

namespace detail {

std::vector<const Solution*> ranked_correct(const Corpus& corpus, std::string_view problem_id) {
  std::vector<const Solution*> out;
  for (std::size_t i : corpus.solutions_of(problem_id)) {
    const Solution& s = corpus.solutions()[i];
    if (s.label == SolutionLabel::correct && s.runtime) out.push_back(&s);
  }
  std::sort(out.begin(), out.end(), [](const Solution* a, const Solution* b) {
    if (*a->runtime != *b->runtime) return *a->runtime < *b->runtime;
    return a->submission_id < b->submission_id;
  });
  return out;
}

std::vector<const Solution*> incorrect_of(const Corpus& corpus, std::string_view problem_id) {
  std::vector<const Solution*> out;
  for (std::size_t i : corpus.solutions_of(problem_id)) {
    const Solution& s = corpus.solutions()[i];
    if (s.label == SolutionLabel::incorrect) out.push_back(&s);
  }
  return out;
}

std::optional<std::pair<const Solution*, const Solution*>> synthetic_pair(const Corpus& corpus,
                                                                          std::string_view problem_id) {
  const Solution* fast = nullptr;
  const Solution* slow = nullptr;
  for (std::size_t i : corpus.solutions_of(problem_id)) {
    const Solution& s = corpus.solutions()[i];
    if (s.role == PairRole::fast && fast == nullptr) fast = &s;
    if (s.role == PairRole::slow && slow == nullptr) slow = &s;
  }
  if (fast == nullptr || slow == nullptr) return std::nullopt;
  return std::make_pair(fast, slow);
}

}  // namespace detail

namespace {

constexpr std::string_view kInstructionHeader = "### Instruction:\n";
constexpr std::string_view kResponseHeader = "### Response:\n";
constexpr std::string_view kFence = "```";

}  // namespace

std::string generate_instruction(const Problem& problem) { return problem.statement; }

std::string optimize_instruction(const Problem& problem, std::string_view code) {
  return problem.statement + "\n\nOptimize the following code:\n" + fence_code(code);
}

std::string fence_code(std::string_view code) {
  std::string out(kFence);
  out += '\n';
  out += code;
  out += '\n';
  out += kFence;
  return out;
}

std::optional<std::string> extract_code(std::string_view response) {
  const auto open = response.find(kFence);
  if (open == std::string_view::npos) return std::nullopt;
  auto body = response.find('\n', open);
  if (body == std::string_view::npos) return std::nullopt;
  ++body;
  const auto close = response.find(kFence, body);
  if (close == std::string_view::npos) return std::nullopt;
  std::string_view code = response.substr(body, close - body);
  if (!code.empty() && code.back() == '\n') code.remove_suffix(1);
  return std::string(code);
}

std::string render_prompt_prefix(std::string_view instruction) {
  std::string out(kInstructionHeader);
  out += instruction;
  out += "\n\n";
  out += kResponseHeader;
  return out;
}

std::string render_prompt(const PromptRecord& record) {
  return render_prompt_prefix(record.instruction) + record.response + "\n";
}

PromptSet build_sft_prompts(const Corpus& corpus, const std::vector<std::string>& problem_ids, std::uint64_t seed) {
  Rng rng(seed);
  PromptSet out;
  for (const std::string& id : problem_ids) {
    const Problem& problem = corpus.problem(id);
    if (problem.source == ProblemSource::synthetic) {
      const auto pair = detail::synthetic_pair(corpus, id);
      if (!pair) {
        ++out.skipped_problems;
        continue;
      }
      const auto& [fast, slow] = *pair;
      out.records.push_back({PromptKind::generate, generate_instruction(problem), fence_code(fast->source_code), id});
      out.records.push_back(
          {PromptKind::optimize, optimize_instruction(problem, slow->source_code), fence_code(fast->source_code), id});
      continue;
    }

    const auto ranked = detail::ranked_correct(corpus, id);
    const std::size_t n = ranked.size();
    if (n == 0) {
      ++out.skipped_problems;
      continue;
    }
    const std::size_t fast_n = std::min<std::size_t>(5, n);
    const Solution* fast = ranked[rng.below(fast_n)];
    out.records.push_back({PromptKind::generate, generate_instruction(problem), fence_code(fast->source_code), id});
    if (n < 2) continue;

    // Slowest third, rounded up: 9 solutions -> 3, 10 -> 4.
    const std::size_t slow_n = (n + 2) / 3;
    const std::size_t slow_idx = n - slow_n + rng.below(slow_n);
    const Solution* target = ranked[rng.below(std::min(fast_n, slow_idx))];
    out.records.push_back({PromptKind::optimize, optimize_instruction(problem, ranked[slow_idx]->source_code),
                           fence_code(target->source_code), id});
  }
  return out;
}

}  // namespace perfalign

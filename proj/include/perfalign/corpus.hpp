#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace perfalign {

struct TestCase {
  std::string input;
  std::string expected_output;
};

enum class ProblemSource { contest, synthetic };

struct Problem {
  std::string id;
  std::string statement;
  std::vector<TestCase> tests;
  std::uint64_t step_limit = 100000;  // interpreter steps, or wall-time ms for the process backend
  ProblemSource source = ProblemSource::contest;
  std::optional<double> median_runtime;
};

enum class SolutionLabel { correct, incorrect, unverified };

/// Position of a synthetic solution within its generated (fast, slow) pair.
enum class PairRole { none, fast, slow };

struct Solution {
  std::string problem_id;
  std::string submission_id;
  std::string source_code;
  SolutionLabel label = SolutionLabel::unverified;
  std::optional<double> runtime;  // present iff label == correct
  PairRole role = PairRole::none;
};

/// Problems and solutions with an id index; solutions reference problems by id.
class Corpus {
 public:
  Corpus() = default;
  /// Throws IntegrityError on duplicate problem ids or dangling solution references.
  Corpus(std::vector<Problem> problems, std::vector<Solution> solutions);

  const std::vector<Problem>& problems() const { return problems_; }
  const std::vector<Solution>& solutions() const { return solutions_; }
  std::vector<Problem>& mutable_problems() { return problems_; }
  std::vector<Solution>& mutable_solutions() { return solutions_; }

  const Problem* find(std::string_view id) const;
  const Problem& problem(std::string_view id) const;

  /// Indices into solutions() for one problem, in file order.
  std::vector<std::size_t> solutions_of(std::string_view problem_id) const;

  bool empty() const { return problems_.empty(); }

 private:
  void reindex();

  std::vector<Problem> problems_;
  std::vector<Solution> solutions_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_problem_;
};

/// Reads corpus JSONL. Malformed lines raise ParseError with the line number.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::string_view jsonl);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
std::string serialize_corpus(const Corpus& corpus);

// ---------------------------------------------------------------- splits

enum class Split { sft, reward, rl_dpa, held_out };

const char* to_string(Split split);
Split split_from_string(std::string_view name);

struct SplitFractions {
  double sft = 0.40;
  double reward_of_rest = 0.66;  // RL_DPA takes the remainder
  double eval = 0.05;
  std::size_t held_out_contest = 10;
};

struct SplitAssignment {
  std::map<std::string, Split> split_of;
  std::map<std::string, bool> is_eval;
  std::uint64_t seed = 0;

  /// Problem ids in the split, optionally restricted to (or excluding) the eval carve-out.
  enum class Part { all, train, eval };
  std::vector<std::string> members(const Corpus& corpus, Split split, Part part = Part::all) const;
};

/// Stratified 40/60 then 66/34 split with a reserved held-out contest set.
/// Throws SizingError if any training split would be empty.
SplitAssignment split_dataset(const Corpus& corpus, std::uint64_t seed, const SplitFractions& fractions = {});

std::string serialize_split(const SplitAssignment& split);
SplitAssignment parse_split(std::string_view json);

// ---------------------------------------------------------------- triplets

struct Triplet {
  std::string problem_id;
  Solution fast;
  Solution slow;
  bool slow_is_incorrect = false;
  bool has_runtimes = false;
};

struct TripletOptions {
  std::size_t fastest_pool = 5;
  double slow_fraction = 0.5;
  double incorrect_fraction = 0.05;
  std::size_t draws_per_problem = 1;
};

struct TripletSet {
  std::vector<Triplet> triplets;
  std::size_t skipped_problems = 0;
  std::size_t injected_incorrect = 0;
};

TripletSet build_triplets(const Corpus& corpus, const std::vector<std::string>& problem_ids, std::uint64_t seed,
                          const TripletOptions& options = {});

std::string serialize_triplets(const std::vector<Triplet>& triplets);
std::vector<Triplet> parse_triplets(std::string_view jsonl);

// ---------------------------------------------------------------- prompts

enum class PromptKind { generate, optimize };

struct PromptRecord {
  PromptKind kind = PromptKind::generate;
  std::string instruction;
  std::string response;
  std::string problem_id;
};

struct PromptSet {
  std::vector<PromptRecord> records;
  std::size_t skipped_problems = 0;
};

PromptSet build_sft_prompts(const Corpus& corpus, const std::vector<std::string>& problem_ids, std::uint64_t seed);

/// Instruction text for the plain generation task.
std::string generate_instruction(const Problem& problem);
/// Instruction text asking for an optimized version of `code`.
std::string optimize_instruction(const Problem& problem, std::string_view code);
/// Response body: the code in a triple-backtick fence.
std::string fence_code(std::string_view code);
/// Inverse of fence_code for model output; returns nullopt when no fence is found.
std::optional<std::string> extract_code(std::string_view response);

/// Everything up to and including the response header; the model continues from here.
std::string render_prompt_prefix(std::string_view instruction);
/// Full instruction/response layout used for supervised fine-tuning.
std::string render_prompt(const PromptRecord& record);

// ---------------------------------------------------------------- synthetic generation

struct GenerationRequest {
  std::string prompt;
  std::string seed_snippet;
};

struct SynthSample {
  std::string statement;
  std::string fast_code;
  std::string slow_code;
};

/// Throws ValidationError unless the snippet has 1-15 lines.
GenerationRequest synth_request(std::string_view seed_snippet);
/// Throws ParseError when any of the three fenced sections is missing.
SynthSample parse_synth_response(std::string_view text);

}  // namespace perfalign

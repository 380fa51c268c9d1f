#include <algorithm>
#include <cmath>
#include <sstream>

#include "json_records.hpp"
#include "perfalign/corpus.hpp"
#include "perfalign/error.hpp"
#include "perfalign/rng.hpp"
#include "ranking.hpp"

namespace perfalign {

TripletSet build_triplets(const Corpus& corpus, const std::vector<std::string>& problem_ids, std::uint64_t seed,
                          const TripletOptions& options) {
  Rng rng(seed);
  TripletSet out;
  std::vector<std::size_t> eligible;  // triplets whose slow side may be swapped for an incorrect solution

  for (const std::string& id : problem_ids) {
    const Problem& problem = corpus.problem(id);
    if (problem.source == ProblemSource::synthetic) {
      const auto pair = detail::synthetic_pair(corpus, id);
      if (!pair) {
        ++out.skipped_problems;
        continue;
      }
      for (std::size_t d = 0; d < options.draws_per_problem; ++d) {
        out.triplets.push_back({id, *pair->first, *pair->second, false, false});
      }
      continue;
    }

    const auto ranked = detail::ranked_correct(corpus, id);
    const std::size_t n = ranked.size();
    if (n < 2) {
      ++out.skipped_problems;
      continue;
    }
    const std::size_t fast_n = std::min(options.fastest_pool, n);
    const auto slow_n = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(options.slow_fraction * static_cast<double>(n))));
    const bool has_incorrect = !detail::incorrect_of(corpus, id).empty();
    for (std::size_t d = 0; d < options.draws_per_problem; ++d) {
      const std::size_t slow_idx = n - slow_n + rng.below(slow_n);
      // Restricting fast to indices below slow keeps the pair distinct and ordered
      // when the two pools overlap on small problems.
      const std::size_t fast_idx = rng.below(std::min(fast_n, slow_idx));
      if (has_incorrect) eligible.push_back(out.triplets.size());
      out.triplets.push_back({id, *ranked[fast_idx], *ranked[slow_idx], false, true});
    }
  }

  const auto quota = static_cast<std::size_t>(
      std::floor(options.incorrect_fraction * static_cast<double>(out.triplets.size())));
  rng.shuffle(std::span(eligible));
  eligible.resize(std::min(quota, eligible.size()));
  std::sort(eligible.begin(), eligible.end());
  for (std::size_t t : eligible) {
    Triplet& triplet = out.triplets[t];
    const auto wrong = detail::incorrect_of(corpus, triplet.problem_id);
    triplet.slow = *wrong[rng.below(wrong.size())];
    triplet.slow_is_incorrect = true;
    ++out.injected_incorrect;
  }
  return out;
}

std::string serialize_triplets(const std::vector<Triplet>& triplets) {
  std::string out;
  for (const Triplet& t : triplets) {
    nlohmann::json j{{"problem_id", t.problem_id},
                     {"fast", to_json(t.fast)},
                     {"slow", to_json(t.slow)},
                     {"slow_is_incorrect", t.slow_is_incorrect},
                     {"has_runtimes", t.has_runtimes}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<Triplet> parse_triplets(std::string_view jsonl) {
  std::vector<Triplet> out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Triplet t;
      t.problem_id = j.at("problem_id").get<std::string>();
      t.fast = solution_from_json_record(j.at("fast"));
      t.slow = solution_from_json_record(j.at("slow"));
      t.slow_is_incorrect = j.at("slow_is_incorrect").get<bool>();
      t.has_runtimes = j.at("has_runtimes").get<bool>();
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed triplet: ") + e.what(), line_no);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

}  // namespace perfalign

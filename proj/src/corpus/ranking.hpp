#pragma once

#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "perfalign/corpus.hpp"

namespace perfalign::detail {

/// Correct solutions with runtimes, fastest first; ties broken by submission id.
std::vector<const Solution*> ranked_correct(const Corpus& corpus, std::string_view problem_id);

std::vector<const Solution*> incorrect_of(const Corpus& corpus, std::string_view problem_id);

/// The stored (fast, slow) pair of a synthetic problem.
std::optional<std::pair<const Solution*, const Solution*>> synthetic_pair(const Corpus& corpus,
                                                                          std::string_view problem_id);

}  // namespace perfalign::detail

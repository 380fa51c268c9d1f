#include <algorithm>
#include <array>
#include <cmath>

#include "json.hpp"
#include "perfalign/corpus.hpp"
#include "perfalign/error.hpp"
#include "perfalign/rng.hpp"

namespace perfalign {

const char* to_string(Split split) {
  switch (split) {
    case Split::sft: return "SFT";
    case Split::reward: return "REWARD";
    case Split::rl_dpa: return "RL_DPA";
    case Split::held_out: return "HELD_OUT";
  }
  return "?";
}

Split split_from_string(std::string_view name) {
  if (name == "SFT") return Split::sft;
  if (name == "REWARD") return Split::reward;
  if (name == "RL_DPA") return Split::rl_dpa;
  if (name == "HELD_OUT") return Split::held_out;
  throw ParseError("unknown split '" + std::string(name) + "'");
}

std::vector<std::string> SplitAssignment::members(const Corpus& corpus, Split split, Part part) const {
  std::vector<std::string> ids;
  for (const Problem& p : corpus.problems()) {
    auto it = split_of.find(p.id);
    if (it == split_of.end() || it->second != split) continue;
    const bool eval = is_eval.contains(p.id) && is_eval.at(p.id);
    if (part == Part::train && eval) continue;
    if (part == Part::eval && !eval) continue;
    ids.push_back(p.id);
  }
  return ids;
}

namespace {

constexpr std::array kTrainingSplits{Split::sft, Split::reward, Split::rl_dpa};

// Largest-remainder apportionment of `total` items over bins proportional to `sizes`.
std::array<std::size_t, 3> apportion(std::size_t total, const std::array<std::size_t, 3>& sizes) {
  std::size_t n = 0;
  for (auto s : sizes) n += s;
  std::array<std::size_t, 3> out{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = n == 0 ? 0.0 : static_cast<double>(total) * static_cast<double>(sizes[i]) / static_cast<double>(n);
    out[i] = static_cast<std::size_t>(std::floor(quota));
    remainder[i] = quota - static_cast<double>(out[i]);
    assigned += out[i];
  }
  while (assigned < total) {
    std::size_t best = 3;
    for (std::size_t i = 0; i < 3; ++i) {
      if (out[i] >= sizes[i]) continue;
      if (best == 3 || remainder[i] > remainder[best]) best = i;
    }
    out[best] += 1;
    remainder[best] = -1.0;
    ++assigned;
  }
  return out;
}

}  // namespace

SplitAssignment split_dataset(const Corpus& corpus, std::uint64_t seed, const SplitFractions& fractions) {
  if (corpus.empty()) throw SizingError("cannot split an empty corpus");

  Rng rng(seed);
  std::vector<std::string> contest;
  std::vector<std::string> synthetic;
  for (const Problem& p : corpus.problems()) {
    (p.source == ProblemSource::contest ? contest : synthetic).push_back(p.id);
  }
  rng.shuffle(std::span(contest));
  rng.shuffle(std::span(synthetic));

  SplitAssignment out;
  out.seed = seed;

  const std::size_t held = std::min(fractions.held_out_contest, contest.size());
  for (std::size_t i = 0; i < held; ++i) out.split_of[contest[i]] = Split::held_out;
  contest.erase(contest.begin(), contest.begin() + static_cast<std::ptrdiff_t>(held));

  // Sizes are fixed globally (floor at each stage, RL_DPA takes the remainder);
  // each source is then apportioned across the splits to keep the mix stratified.
  const std::size_t n = contest.size() + synthetic.size();
  const auto sft = static_cast<std::size_t>(std::floor(fractions.sft * static_cast<double>(n)));
  const auto reward = static_cast<std::size_t>(std::floor(fractions.reward_of_rest * static_cast<double>(n - sft)));
  const std::array<std::size_t, 3> sizes{sft, reward, n - sft - reward};
  for (std::size_t i = 0; i < 3; ++i) {
    if (sizes[i] == 0) {
      throw SizingError("corpus of " + std::to_string(n) + " trainable problems leaves split " +
                        to_string(kTrainingSplits[i]) + " empty");
    }
  }

  const auto contest_counts = apportion(contest.size(), sizes);
  std::size_t ci = 0;
  std::size_t si = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    std::vector<std::string> members;
    for (std::size_t k = 0; k < contest_counts[b]; ++k) members.push_back(contest[ci++]);
    for (std::size_t k = contest_counts[b]; k < sizes[b]; ++k) members.push_back(synthetic[si++]);
    for (const auto& id : members) out.split_of[id] = kTrainingSplits[b];

    // Evaluation carve-out: floor(5%) of the split, at least one problem.
    auto n_eval = static_cast<std::size_t>(std::floor(fractions.eval * static_cast<double>(members.size())));
    n_eval = std::max<std::size_t>(n_eval, 1);
    std::sort(members.begin(), members.end());
    rng.shuffle(std::span(members));
    for (std::size_t k = 0; k < members.size(); ++k) out.is_eval[members[k]] = k < n_eval;
  }
  return out;
}

std::string serialize_split(const SplitAssignment& split) {
  nlohmann::json splits = nlohmann::json::object();
  nlohmann::json eval = nlohmann::json::array();
  for (const auto& [id, s] : split.split_of) splits[id] = to_string(s);
  for (const auto& [id, flag] : split.is_eval) {
    if (flag) eval.push_back(id);
  }
  nlohmann::json j{{"seed", split.seed}, {"splits", splits}, {"eval", eval}};
  return j.dump(2) + "\n";
}

SplitAssignment parse_split(std::string_view text) {
  SplitAssignment out;
  try {
    const auto j = nlohmann::json::parse(text);
    out.seed = j.value("seed", std::uint64_t{0});
    for (const auto& [id, name] : j.at("splits").items()) {
      out.split_of[id] = split_from_string(name.get<std::string>());
      if (out.split_of[id] != Split::held_out) out.is_eval[id] = false;
    }
    for (const auto& id : j.value("eval", nlohmann::json::array())) out.is_eval[id.get<std::string>()] = true;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed split file: ") + e.what());
  }
  return out;
}

}  // namespace perfalign

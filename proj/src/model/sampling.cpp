#include "perfalign/model/sampling.hpp"

#include <algorithm>
#include <numeric>

#include "perfalign/error.hpp"
#include "perfalign/model/tokenizer.hpp"
#include "perfalign/rng.hpp"

namespace perfalign {

void SampleConfig::validate() const {
  if (!(temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ValidationError("top_p must lie in (0, 1]");
  if (top_k < 0) throw ValidationError("top_k must be >= 0");
  if (max_new_tokens < 0) throw ValidationError("max_new_tokens must be >= 0");
}

std::vector<double> sampling_distribution(const RowVector& scores, const SampleConfig& cfg) {
  const auto n = static_cast<std::size_t>(scores.size());
  std::vector<double> probs(n, 0.0);
  if (n == 0) return probs;
  if (cfg.temperature == 0.0) {
    Eigen::Index best = 0;
    scores.maxCoeff(&best);
    probs[static_cast<std::size_t>(best)] = 1.0;
    return probs;
  }

  const double m = scores.maxCoeff();
  for (std::size_t i = 0; i < n; ++i) probs[i] = std::exp((scores(static_cast<Eigen::Index>(i)) - m) / cfg.temperature);
  const double z = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (double& p : probs) p /= z;

  const bool use_k = cfg.top_k > 0 && static_cast<std::size_t>(cfg.top_k) < n;
  if (!use_k && cfg.top_p >= 1.0) return probs;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::size_t keep = use_k ? static_cast<std::size_t>(cfg.top_k) : n;
  if (cfg.top_p < 1.0) {
    double kept_mass = 0.0;
    for (std::size_t i = 0; i < keep; ++i) kept_mass += probs[order[i]];
    double cum = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
      cum += probs[order[i]];
      // Compare within the already-truncated mass so top-k and top-p compose.
      if (cum + 1e-12 >= cfg.top_p * kept_mass) {
        keep = i + 1;
        break;
      }
    }
  }
  std::vector<double> out(n, 0.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < keep; ++i) mass += probs[order[i]];
  for (std::size_t i = 0; i < keep; ++i) out[order[i]] = probs[order[i]] / mass;
  return out;
}

int draw_token(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  int last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cum += probs[i];
    last = static_cast<int>(i);
    if (u < cum) return last;
  }
  return last;
}

std::vector<int> sample(const Weights& w, std::span<const int> prompt, const SampleConfig& cfg, Rng& rng) {
  cfg.validate();
  if (prompt.empty()) throw ValidationError("sampling needs a nonempty prompt");
  DecodeState state(w);
  RowVector scores;
  for (int t : prompt) scores = state.push(t);
  std::vector<int> out;
  // prompt + completion never exceeds the context, so the result can be rescored.
  while (static_cast<int>(out.size()) < cfg.max_new_tokens && state.length() < w.config.context) {
    const int next = draw_token(sampling_distribution(scores, cfg), rng);
    out.push_back(next);
    if (next == Tokenizer::kEos || state.length() + 1 >= w.config.context) break;
    scores = state.push(next);
  }
  return out;
}

std::vector<int> sample(const Weights& w, std::span<const int> prompt, const SampleConfig& cfg) {
  Rng rng(cfg.seed);
  return sample(w, prompt, cfg, rng);
}

}  // namespace perfalign

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "perfalign/model/transformer.hpp"

namespace perfalign {

class Rng;

struct SampleConfig {
  double temperature = 1.0;
  double top_p = 1.0;
  int top_k = 0;  // 0 disables
  int max_new_tokens = 128;
  std::uint64_t seed = 0;

  /// Throws ValidationError for temperature < 0, top_p outside (0, 1], top_k < 0.
  void validate() const;
};

/// The distribution actually sampled from: temperature, then top-k, then top-p
/// (smallest probability-sorted prefix with mass >= p, ties broken by lower id),
/// renormalized. Temperature 0 yields a one-hot argmax.
std::vector<double> sampling_distribution(const RowVector& scores, const SampleConfig& cfg);

/// Inverse-CDF draw from a normalized distribution.
int draw_token(std::span<const double> probs, Rng& rng);

/// Autoregressive continuation of `prompt`. The returned tokens include the
/// terminating EOS when one was produced; generation also stops at max_new_tokens
/// or the context length.
std::vector<int> sample(const Weights& w, std::span<const int> prompt, const SampleConfig& cfg, Rng& rng);

/// Same, seeded from cfg.seed.
std::vector<int> sample(const Weights& w, std::span<const int> prompt, const SampleConfig& cfg);

}  // namespace perfalign

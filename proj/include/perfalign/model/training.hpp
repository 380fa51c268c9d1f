#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "perfalign/corpus.hpp"
#include "perfalign/model/checkpoint.hpp"
#include "perfalign/model/tokenizer.hpp"
#include "perfalign/model/transformer.hpp"

namespace perfalign {

/// Named, non-owning views of trainable tensors in a fixed order.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Matrix*> tensors;

  void add(const std::string& name, Matrix& m) {
    names.push_back(name);
    tensors.push_back(&m);
  }
  std::size_t size() const { return tensors.size(); }
};

ParamSet params_of(Weights& w);
void add_head(ParamSet& set, ScalarHead& head, const std::string& prefix);

/// Throws NumericalError naming the first tensor holding NaN or Inf.
void check_finite(const ParamSet& set, const std::string& what);

struct AdamConfig {
  double lr = 1.41e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
  double grad_clip = 1.0;     // global L2 norm; <= 0 disables
};

class Adam {
 public:
  Adam(const ParamSet& params, AdamConfig cfg);

  /// One update from gradients laid out like `params`. Returns the pre-clip norm.
  double step(const ParamSet& params, const ParamSet& grads);
  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

// ---------------------------------------------------------------- log-probabilities

/// log p(tokens[t] | tokens[<t]) for t in [start, T) from a completed forward pass.
std::vector<double> target_logprobs(const ForwardCache& cache, std::size_t start);

/// d(sum_i coeff[i] * logp_i)/d logits for the same targets.
Matrix target_logprob_grad(const ForwardCache& cache, std::size_t start, std::span<const double> coeff);

/// Sum of completion-token log-probabilities given the prompt. Empty completion
/// returns 0 by convention.
double sequence_logprob(const Weights& w, std::span<const int> prompt, std::span<const int> completion);

/// Same, accumulating scale * gradient into `grads`.
double sequence_logprob_grad(const Weights& w, std::span<const int> prompt, std::span<const int> completion,
                             double scale, Weights& grads);

std::vector<int> concat(std::span<const int> a, std::span<const int> b);

// ---------------------------------------------------------------- supervised fine-tuning

/// BOS + instruction/response layout + EOS; loss covers response tokens and EOS.
struct SftExample {
  std::vector<int> tokens;
  std::size_t response_start = 0;
};

SftExample make_sft_example(const Tokenizer& tok, const PromptRecord& record);

/// Mean token cross-entropy over the response; with `grads`, accumulates
/// scale * gradient.
double sft_loss(const Weights& w, const SftExample& ex, Weights* grads = nullptr, double scale = 1.0);

struct SftConfig {
  AdamConfig adam;  // lr default 1.41e-5
  int epochs = 3;
  int batch_size = 4;
  std::uint64_t seed = 0;
};

struct TrainLogRow {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

std::string train_log_csv(std::span<const TrainLogRow> rows);

/// Mini-batch Adam over shuffled examples. Throws NumericalError on divergence.
Weights sft_train(Weights w, std::span<const SftExample> examples, const SftConfig& cfg,
                  std::vector<TrainLogRow>* log = nullptr);

Checkpoint sft_train(const Checkpoint& base, std::span<const PromptRecord> prompts, const SftConfig& cfg,
                     std::vector<TrainLogRow>* log = nullptr);

// ---------------------------------------------------------------- perplexity

/// exp(total NLL / total predicted tokens); every position after the first is predicted.
double perplexity(const Weights& w, std::span<const std::vector<int>> sequences);
/// Restricted to response tokens.
double perplexity(const Weights& w, std::span<const SftExample> examples);
double perplexity_from_cross_entropy(double mean_nll);

}  // namespace perfalign

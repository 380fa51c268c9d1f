#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "perfalign/corpus.hpp"
#include "perfalign/executor.hpp"
#include "perfalign/model/checkpoint.hpp"
#include "perfalign/model/sampling.hpp"
#include "perfalign/model/training.hpp"
#include "perfalign/reward.hpp"

namespace perfalign {

/// RLPF settings. DPA has its own DpaConfig.
struct AlignConfig {
  double kl_coeff = 0.1;
  double clip_eps = 0.2;
  int epochs = 4;
  int batch_size = 4;
  AdamConfig adam;  // lr default 1.41e-5
  double gae_lambda = 0.95;
  double discount = 1.0;
  double value_coeff = 0.5;
  int ppo_passes = 1;  // optimizer passes over each rollout batch
  SampleConfig rollout{.temperature = 1.0, .top_p = 1.0, .top_k = 0, .max_new_tokens = 96, .seed = 0};
  std::uint64_t seed = 0;

  void validate() const;
};

/// Single-sample estimate of KL(policy || reference): mean of per-token log-ratio.
double kl_estimate(std::span<const double> policy_logprobs, std::span<const double> ref_logprobs);

/// Probability ratio clamped to [1 - eps, 1 + eps].
double clip_ratio(double ratio, double eps);

/// Policy weights plus the value head used for advantage estimation.
struct PolicyState {
  Weights weights;
  ScalarHead value_head;
};

PolicyState make_policy(const Weights& sft, std::uint64_t seed = 0);

struct Rollout {
  std::string problem_id;
  std::vector<int> prompt;
  std::vector<int> completion;
  std::vector<double> policy_logprobs;  // behaviour policy, per completion token
  std::vector<double> ref_logprobs;
  std::vector<double> values;
  double reward = 0.0;  // composite reward of the whole completion
  RewardSource reward_source = RewardSource::model;
  std::vector<double> advantages;
  std::vector<double> returns;
};

struct RolloutBatch {
  std::vector<Rollout> rollouts;
};

/// Fills logprobs under policy and reference plus value estimates.
void score_rollout(Rollout& r, const PolicyState& policy, const Weights& reference);

/// Per-token reward: -kl_coeff * (logp - ref_logp) at every token, plus the
/// scalar reward at the final token. GAE over those, then advantages whitened
/// across all tokens of the batch.
void compute_advantages(RolloutBatch& batch, const AlignConfig& cfg);

struct TokenObservation {
  double ratio = 1.0;
  double clipped_ratio = 1.0;
  double advantage = 0.0;
  double objective = 0.0;  // min(ratio * A, clipped_ratio * A)
};

using PpoObserver = std::function<void(const TokenObservation&)>;

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
};

/// Clipped surrogate (token mean over the batch) plus value_coeff * squared
/// value error. Accumulates gradients into `grads` when given.
PpoStats ppo_loss(const PolicyState& policy, const RolloutBatch& batch, const AlignConfig& cfg,
                  PolicyState* grads = nullptr, const PpoObserver& observer = {});

/// One or more Adam passes on ppo_loss. The reference model is not touched.
PpoStats ppo_step(PolicyState& policy, Adam& adam, const RolloutBatch& batch, const AlignConfig& cfg,
                  const PpoObserver& observer = {});

/// BOS + generation prompt prefix for `problem`.
std::vector<int> generation_prompt(const Tokenizer& tok, const Problem& problem);
/// Code in a sampled completion: the fenced block when present, otherwise the raw text.
std::string completion_code(const Tokenizer& tok, std::span<const int> completion);

struct AlignHistoryRow {
  int epoch = 0;
  int batch = 0;
  double mean_reward = 0.0;
  double kl_estimate = 0.0;
  double loss = 0.0;
};

std::string align_history_csv(std::span<const AlignHistoryRow> rows);

struct RlpfResult {
  PolicyState policy;
  std::vector<AlignHistoryRow> history;
};

/// epochs x {sample a batch of completions, score with composite_reward, ppo_step}.
/// `on_epoch` receives the policy after each completed epoch (last good state).
RlpfResult rlpf_train(const Weights& sft, const Tokenizer& tok, std::span<const Problem* const> problems,
                      const ExecBackend& backend, const RewardModel* reward_model, const AlignConfig& cfg,
                      const std::function<void(const PolicyState&, int)>& on_epoch = {});

// ---------------------------------------------------------------- DPA

/// -log sigmoid(beta * (pf - rf) - beta * (ps - rs) - mu).
double dpa_loss(double policy_fast, double ref_fast, double policy_slow, double ref_slow, double mu, double beta);

struct DpaExample {
  std::string problem_id;
  std::vector<int> prompt;
  std::vector<int> fast;  // completion tokens, EOS included
  std::vector<int> slow;
  double margin = 0.0;
  double ref_fast = 0.0;  // reference log-probabilities, filled by prepare_dpa
  double ref_slow = 0.0;
};

std::vector<DpaExample> dpa_examples(const Corpus& corpus, std::span<const Triplet> triplets, const Tokenizer& tok,
                                     const MarginConfig& margin_cfg = {});
/// Completion tokens for `code` in the SFT response layout.
std::vector<int> response_tokens(const Tokenizer& tok, std::string_view code);

void prepare_dpa(std::span<DpaExample> examples, const Weights& reference);

/// Mean loss over `examples`; accumulates the gradient of that mean when asked.
double dpa_batch_loss(const Weights& policy, std::span<const DpaExample> examples, double beta,
                      Weights* grads = nullptr);

struct DpaConfig {
  double beta = 0.6;
  AdamConfig adam{.lr = 1e-7};
  int epochs = 1;
  int batch_size = 4;
  std::uint64_t seed = 0;
};

struct DpaResult {
  Weights policy;
  std::vector<AlignHistoryRow> history;
};

/// Reference = frozen copy of `sft`; reference log-probabilities are recomputed here.
DpaResult dpa_train(const Weights& sft, std::vector<DpaExample> examples, const DpaConfig& cfg);

/// Fraction of examples whose fast log-ratio strictly exceeds the slow one.
double dpa_accuracy(const Weights& policy, const Weights& reference, std::span<const DpaExample> examples);

}  // namespace perfalign

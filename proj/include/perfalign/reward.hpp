#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "perfalign/corpus.hpp"
#include "perfalign/executor.hpp"
#include "perfalign/model/checkpoint.hpp"
#include "perfalign/model/training.hpp"

namespace perfalign {

/// Backbone plus a linear head read at the final (EOS) position.
struct RewardModel {
  Weights backbone;
  ScalarHead head;
  Tokenizer tokenizer;
};

/// Separator between statement and code in the reward-model input.
inline constexpr std::string_view kRewardSeparator = "\n---\n";
inline constexpr int kRewardFormat = 1;

/// BOS + statement + separator + code + EOS. When too long for the context the
/// code is cut from the end; the EOS is always kept.
std::vector<int> reward_input(const Tokenizer& tok, std::string_view statement, std::string_view code, int context);

/// A zero-initialized head gives a constant score. head_stddev > 0 draws it at random.
RewardModel make_reward_model(const Checkpoint& base, std::uint64_t seed = 0, double head_stddev = 0.0);

Checkpoint to_checkpoint(const RewardModel& model);
RewardModel reward_model_from(const Checkpoint& ckpt);

double score(const RewardModel& model, std::string_view statement, std::string_view code);
/// Score of a prepared input; with `grads`/`head_grads` accumulates scale * gradient.
double score_tokens(const RewardModel& model, std::span<const int> tokens, Weights* grads = nullptr,
                    ScalarHead* head_grads = nullptr, double scale = 1.0);

struct MarginConfig {
  double lambda_max = 3.0;
  void validate() const;
};

/// min(lambda, slow/fast) for runtime-bearing contest triplets, 0 otherwise.
double margin(const Triplet& triplet, const MarginConfig& cfg = {});

/// -log sigmoid(r_fast - r_slow - mu).
double reward_loss(double r_fast, double r_slow, double mu);
/// d reward_loss / d r_fast (the r_slow derivative is its negation).
double reward_loss_grad(double r_fast, double r_slow, double mu);

struct RewardExample {
  std::string problem_id;
  std::vector<int> fast;  // rendered inputs
  std::vector<int> slow;
  double margin = 0.0;
};

std::vector<RewardExample> reward_examples(const Corpus& corpus, std::span<const Triplet> triplets,
                                           const Tokenizer& tok, int context, const MarginConfig& cfg = {});

/// Mean pairwise loss over `examples`, accumulating the gradient of that mean when asked.
double reward_batch_loss(const RewardModel& model, std::span<const RewardExample> examples, Weights* grads = nullptr,
                         ScalarHead* head_grads = nullptr);

struct RewardTrainConfig {
  AdamConfig adam{.lr = 1e-4};
  int epochs = 1;
  int batch_size = 4;
  std::uint64_t seed = 0;
};

struct RewardLogRow {
  long step = 0;
  double loss = 0.0;
  double eval_accuracy = 0.0;  // NaN when not evaluated at this step
};

std::string reward_log_csv(std::span<const RewardLogRow> rows);

/// Adam on the mean pairwise loss; evaluates accuracy on `eval` after every
/// `eval_every` steps and at the end (when eval is nonempty).
RewardModel train_reward_model(RewardModel model, std::span<const RewardExample> train,
                               std::span<const RewardExample> eval, const RewardTrainConfig& cfg,
                               std::vector<RewardLogRow>* log = nullptr, int eval_every = 0);

/// Fraction of examples scored strictly higher for the fast code.
double reward_accuracy(const RewardModel& model, std::span<const RewardExample> examples);
/// Same count from precomputed (fast, slow) scores.
double pairwise_accuracy(std::span<const std::pair<double, double>> scores);

enum class RewardSource { incorrect, execution, model, infra_failure };

const char* to_string(RewardSource source);

struct CompositeReward {
  double value = 0.0;
  RewardSource source = RewardSource::model;
  std::string note;
};

/// Contest problems: -1 when the code fails, median_runtime/runtime - 1 when it
/// passes. Synthetic problems: the reward model's score. Backend infrastructure
/// failures give -1 with source infra_failure.
CompositeReward composite_reward(const Problem& problem, std::string_view code, const ExecBackend& backend,
                                 const RewardModel* model);

}  // namespace perfalign

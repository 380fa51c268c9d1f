#include "perfalign/reward.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "perfalign/error.hpp"
#include "perfalign/rng.hpp"

namespace perfalign {

std::vector<int> reward_input(const Tokenizer& tok, std::string_view statement, std::string_view code, int context) {
  std::vector<int> ids{Tokenizer::kBos};
  const auto head = tok.encode(std::string(statement) + std::string(kRewardSeparator));
  const auto body = tok.encode(code);
  ids.insert(ids.end(), head.begin(), head.end());
  ids.insert(ids.end(), body.begin(), body.end());
  if (static_cast<int>(ids.size()) + 1 > context) ids.resize(static_cast<std::size_t>(std::max(1, context - 1)));
  ids.push_back(Tokenizer::kEos);
  return ids;
}

RewardModel make_reward_model(const Checkpoint& base, std::uint64_t seed, double head_stddev) {
  Rng rng(seed);
  return {base.weights, ScalarHead::init(base.weights.config.width, rng, head_stddev), base.tokenizer};
}

Checkpoint to_checkpoint(const RewardModel& model) {
  Checkpoint c;
  c.weights = model.backbone;
  c.tokenizer = model.tokenizer;
  c.role = Role::reward;
  c.extras["reward_head.weight"] = model.head.weight;
  c.extras["reward_head.bias"] = model.head.bias;
  c.extras["reward_head.format"] = Matrix::Constant(1, 1, kRewardFormat);
  return c;
}

RewardModel reward_model_from(const Checkpoint& ckpt) {
  if (ckpt.role != Role::reward) {
    throw PrerequisiteError(std::string("expected a reward checkpoint, got role ") + to_string(ckpt.role));
  }
  auto w = ckpt.extras.find("reward_head.weight");
  auto b = ckpt.extras.find("reward_head.bias");
  if (w == ckpt.extras.end() || b == ckpt.extras.end()) throw ParseError("reward checkpoint lacks its head tensors");
  if (w->second.rows() != ckpt.weights.config.width || w->second.cols() != 1 || b->second.size() != 1) {
    throw ParseError("reward head has the wrong shape");
  }
  return {ckpt.weights, ScalarHead{w->second, b->second}, ckpt.tokenizer};
}

namespace {

double head_score(const RewardModel& model, const ForwardCache& cache) {
  return model.head.apply(cache.hidden, cache.hidden.rows() - 1);
}

void head_backward(const RewardModel& model, const ForwardCache& cache, double scale, Weights* grads,
                   ScalarHead* head_grads) {
  const Eigen::Index last = cache.hidden.rows() - 1;
  if (head_grads != nullptr) {
    head_grads->weight.col(0) += scale * cache.hidden.row(last).transpose();
    head_grads->bias(0, 0) += scale;
  }
  if (grads != nullptr) {
    Matrix d_hidden = Matrix::Zero(cache.hidden.rows(), cache.hidden.cols());
    d_hidden.row(last) = scale * model.head.weight.col(0).transpose();
    backward(model.backbone, cache, Matrix(), d_hidden, *grads);
  }
}

}  // namespace

double score_tokens(const RewardModel& model, std::span<const int> tokens, Weights* grads, ScalarHead* head_grads,
                    double scale) {
  ForwardCache cache;
  forward(model.backbone, tokens, cache);
  head_backward(model, cache, scale, grads, head_grads);
  return head_score(model, cache);
}

double score(const RewardModel& model, std::string_view statement, std::string_view code) {
  return score_tokens(model, reward_input(model.tokenizer, statement, code, model.backbone.config.context));
}

void MarginConfig::validate() const {
  if (!(lambda_max > 0.0)) throw ValidationError("margin lambda_max must be positive");
}

double margin(const Triplet& t, const MarginConfig& cfg) {
  cfg.validate();
  if (!t.has_runtimes || t.slow_is_incorrect) return 0.0;
  if (!t.fast.runtime || !t.slow.runtime || *t.fast.runtime <= 0.0 || *t.slow.runtime <= 0.0) {
    throw DomainError("margin needs positive runtimes for both solutions of " + t.problem_id);
  }
  return std::min(cfg.lambda_max, *t.slow.runtime / *t.fast.runtime);
}

double reward_loss(double r_fast, double r_slow, double mu) { return neg_log_sigmoid(r_fast - r_slow - mu); }

double reward_loss_grad(double r_fast, double r_slow, double mu) { return -sigmoid(-(r_fast - r_slow - mu)); }

std::vector<RewardExample> reward_examples(const Corpus& corpus, std::span<const Triplet> triplets,
                                           const Tokenizer& tok, int context, const MarginConfig& cfg) {
  std::vector<RewardExample> out;
  out.reserve(triplets.size());
  for (const auto& t : triplets) {
    const Problem& p = corpus.problem(t.problem_id);
    out.push_back({t.problem_id, reward_input(tok, p.statement, t.fast.source_code, context),
                   reward_input(tok, p.statement, t.slow.source_code, context), margin(t, cfg)});
  }
  return out;
}

double reward_batch_loss(const RewardModel& model, std::span<const RewardExample> examples, Weights* grads,
                         ScalarHead* head_grads) {
  if (examples.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(examples.size());
  double loss = 0.0;
  ForwardCache fast, slow;
  for (const auto& ex : examples) {
    forward(model.backbone, ex.fast, fast);
    forward(model.backbone, ex.slow, slow);
    const double rf = head_score(model, fast);
    const double rs = head_score(model, slow);
    loss += inv * reward_loss(rf, rs, ex.margin);
    if (grads != nullptr || head_grads != nullptr) {
      const double g = inv * reward_loss_grad(rf, rs, ex.margin);
      head_backward(model, fast, g, grads, head_grads);
      head_backward(model, slow, -g, grads, head_grads);
    }
  }
  return loss;
}

std::string reward_log_csv(std::span<const RewardLogRow> rows) {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss,eval_accuracy\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.loss << ',';
    if (!std::isnan(r.eval_accuracy)) out << r.eval_accuracy;
    out << '\n';
  }
  return out.str();
}

RewardModel train_reward_model(RewardModel model, std::span<const RewardExample> train,
                               std::span<const RewardExample> eval, const RewardTrainConfig& cfg,
                               std::vector<RewardLogRow>* log, int eval_every) {
  if (train.empty()) throw ValidationError("reward training needs at least one triplet");
  if (cfg.batch_size <= 0 || cfg.epochs < 0) throw ValidationError("reward batch size and epochs must be positive");
  Weights grads = Weights::zeros(model.backbone.config);
  ScalarHead head_grads = ScalarHead::zeros(model.backbone.config.width);
  ParamSet params = params_of(model.backbone);
  add_head(params, model.head, "reward_head");
  ParamSet grad_set = params_of(grads);
  add_head(grad_set, head_grads, "reward_head");
  Adam adam(params, cfg.adam);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<RewardExample> batch;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t b = 0; b < order.size(); b += bs) {
      batch.clear();
      for (std::size_t i = b; i < std::min(order.size(), b + bs); ++i) batch.push_back(train[order[i]]);
      grads.set_zero();
      head_grads.weight.setZero();
      head_grads.bias.setZero();
      const double loss = reward_batch_loss(model, batch, &grads, &head_grads);
      if (!std::isfinite(loss)) {
        throw NumericalError("reward training diverged: non-finite loss at step " + std::to_string(adam.steps() + 1));
      }
      adam.step(params, grad_set);
      double acc = nan;
      if (!eval.empty() && eval_every > 0 && adam.steps() % eval_every == 0) acc = reward_accuracy(model, eval);
      if (log != nullptr) log->push_back({adam.steps(), loss, acc});
    }
  }
  if (log != nullptr && !eval.empty() && !log->empty() && std::isnan(log->back().eval_accuracy)) {
    log->back().eval_accuracy = reward_accuracy(model, eval);
  }
  return model;
}

double pairwise_accuracy(std::span<const std::pair<double, double>> scores) {
  if (scores.empty()) throw ValidationError("accuracy needs at least one pair");
  std::size_t wins = 0;
  for (const auto& [f, s] : scores) wins += f > s ? 1 : 0;
  return static_cast<double>(wins) / static_cast<double>(scores.size());
}

double reward_accuracy(const RewardModel& model, std::span<const RewardExample> examples) {
  std::vector<std::pair<double, double>> scores;
  scores.reserve(examples.size());
  for (const auto& ex : examples) scores.emplace_back(score_tokens(model, ex.fast), score_tokens(model, ex.slow));
  return pairwise_accuracy(scores);
}

const char* to_string(RewardSource source) {
  switch (source) {
    case RewardSource::incorrect: return "incorrect";
    case RewardSource::execution: return "execution";
    case RewardSource::model: return "model";
    case RewardSource::infra_failure: return "infra_failure";
  }
  return "model";
}

CompositeReward composite_reward(const Problem& problem, std::string_view code, const ExecBackend& backend,
                                 const RewardModel* model) {
  if (problem.source == ProblemSource::synthetic || problem.tests.empty()) {
    if (model == nullptr) throw PrerequisiteError("problem " + problem.id + " has no tests and no reward model");
    return {score(*model, problem.statement, code), RewardSource::model, ""};
  }
  const Verdict v = evaluate(code, problem, backend);
  if (v.infra_failure) return {-1.0, RewardSource::infra_failure, "infra: " + v.note};
  if (v.status != VerdictStatus::correct) return {-1.0, RewardSource::incorrect, to_string(v.status)};
  if (!problem.median_runtime) throw PrerequisiteError("problem " + problem.id + " has no median runtime; label first");
  if (*v.avg_runtime <= 0.0) return {-1.0, RewardSource::infra_failure, "infra: zero measured runtime"};
  return {*problem.median_runtime / *v.avg_runtime - 1.0, RewardSource::execution, ""};
}

}  // namespace perfalign

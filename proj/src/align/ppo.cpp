#include <cmath>
#include <numeric>
#include <sstream>

#include "perfalign/align.hpp"
#include "perfalign/error.hpp"
#include "perfalign/rng.hpp"

namespace perfalign {

void AlignConfig::validate() const {
  if (!(kl_coeff >= 0.0)) throw ValidationError("kl_coeff must be >= 0");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ValidationError("clip_eps must lie in (0, 1)");
  if (epochs < 0 || batch_size <= 0 || ppo_passes <= 0) throw ValidationError("epochs, batch size and passes");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0) || !(discount >= 0.0 && discount <= 1.0)) {
    throw ValidationError("gae_lambda and discount must lie in [0, 1]");
  }
  rollout.validate();
}

double kl_estimate(std::span<const double> policy_logprobs, std::span<const double> ref_logprobs) {
  if (policy_logprobs.size() != ref_logprobs.size()) throw ValidationError("KL estimate: length mismatch");
  if (policy_logprobs.empty()) throw ValidationError("KL estimate needs at least one token");
  double sum = 0.0;
  for (std::size_t i = 0; i < policy_logprobs.size(); ++i) sum += policy_logprobs[i] - ref_logprobs[i];
  return sum / static_cast<double>(policy_logprobs.size());
}

double clip_ratio(double ratio, double eps) { return std::clamp(ratio, 1.0 - eps, 1.0 + eps); }

PolicyState make_policy(const Weights& sft, std::uint64_t seed) {
  Rng rng(seed);
  return {sft, ScalarHead::init(sft.config.width, rng, 0.0)};
}

void score_rollout(Rollout& r, const PolicyState& policy, const Weights& reference) {
  const std::size_t start = r.prompt.size();
  const auto tokens = concat(r.prompt, r.completion);
  ForwardCache cache;
  forward(policy.weights, tokens, cache);
  r.policy_logprobs = target_logprobs(cache, start);
  r.values.clear();
  for (std::size_t i = 0; i < r.completion.size(); ++i) {
    r.values.push_back(policy.value_head.apply(cache.hidden, static_cast<Eigen::Index>(start + i - 1)));
  }
  forward(reference, tokens, cache);
  r.ref_logprobs = target_logprobs(cache, start);
}

void compute_advantages(RolloutBatch& batch, const AlignConfig& cfg) {
  std::vector<double> all;
  for (auto& r : batch.rollouts) {
    const std::size_t n = r.completion.size();
    if (r.policy_logprobs.size() != n || r.ref_logprobs.size() != n || r.values.size() != n) {
      throw ValidationError("rollout " + r.problem_id + " is not scored");
    }
    if (!std::isfinite(r.reward)) throw NumericalError("non-finite reward for " + r.problem_id);
    r.advantages.assign(n, 0.0);
    r.returns.assign(n, 0.0);
    double next_adv = 0.0;
    double next_value = 0.0;
    for (std::size_t i = n; i-- > 0;) {
      double reward = -cfg.kl_coeff * (r.policy_logprobs[i] - r.ref_logprobs[i]);
      if (i + 1 == n) reward += r.reward;
      const double delta = reward + cfg.discount * next_value - r.values[i];
      next_adv = delta + cfg.discount * cfg.gae_lambda * next_adv;
      r.advantages[i] = next_adv;
      r.returns[i] = next_adv + r.values[i];
      next_value = r.values[i];
    }
    all.insert(all.end(), r.advantages.begin(), r.advantages.end());
  }
  if (all.empty()) return;
  const double mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
  double var = 0.0;
  for (double a : all) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(all.size()));
  for (auto& r : batch.rollouts) {
    for (double& a : r.advantages) a = (a - mean) / (sd + 1e-8);
  }
}

PpoStats ppo_loss(const PolicyState& policy, const RolloutBatch& batch, const AlignConfig& cfg, PolicyState* grads,
                  const PpoObserver& observer) {
  std::size_t total = 0;
  for (const auto& r : batch.rollouts) total += r.completion.size();
  PpoStats stats;
  if (total == 0) return stats;
  const double inv = 1.0 / static_cast<double>(total);

  ForwardCache cache;
  std::size_t clipped = 0;
  for (const auto& r : batch.rollouts) {
    const std::size_t n = r.completion.size();
    if (n == 0) continue;
    if (r.advantages.size() != n || r.returns.size() != n) {
      throw ValidationError("rollout " + r.problem_id + " has no advantages");
    }
    const std::size_t start = r.prompt.size();
    forward(policy.weights, concat(r.prompt, r.completion), cache);
    const auto lp = target_logprobs(cache, start);

    std::vector<double> coeff(n, 0.0);
    Matrix d_hidden = Matrix::Zero(cache.hidden.rows(), cache.hidden.cols());
    for (std::size_t i = 0; i < n; ++i) {
      const double ratio = std::exp(lp[i] - r.policy_logprobs[i]);
      const double cr = clip_ratio(ratio, cfg.clip_eps);
      const double a = r.advantages[i];
      const bool unclipped_active = ratio * a <= cr * a;
      const double objective = unclipped_active ? ratio * a : cr * a;
      if (ratio != cr) ++clipped;
      stats.policy_loss -= inv * objective;
      stats.kl += inv * (lp[i] - r.ref_logprobs[i]);
      // d(-objective)/d logp; the clipped branch is constant in the parameters.
      if (unclipped_active) coeff[i] = -inv * ratio * a;
      if (observer) observer({ratio, cr, a, objective});

      const auto row = static_cast<Eigen::Index>(start + i - 1);
      const double v = policy.value_head.apply(cache.hidden, row);
      const double err = v - r.returns[i];
      stats.value_loss += inv * cfg.value_coeff * 0.5 * err * err;
      if (grads != nullptr) {
        const double dv = inv * cfg.value_coeff * err;
        grads->value_head.weight.col(0) += dv * cache.hidden.row(row).transpose();
        grads->value_head.bias(0, 0) += dv;
        d_hidden.row(row) += dv * policy.value_head.weight.col(0).transpose();
      }
    }
    if (grads != nullptr) {
      backward(policy.weights, cache, target_logprob_grad(cache, start, coeff), d_hidden, grads->weights);
    }
  }
  stats.clip_fraction = static_cast<double>(clipped) * inv;
  if (!std::isfinite(stats.policy_loss)) throw NumericalError("PPO: non-finite policy loss");
  if (!std::isfinite(stats.value_loss)) throw NumericalError("PPO: non-finite value loss");
  return stats;
}

namespace {

ParamSet policy_params(PolicyState& p) {
  ParamSet set = params_of(p.weights);
  add_head(set, p.value_head, "value_head");
  return set;
}

}  // namespace

PpoStats ppo_step(PolicyState& policy, Adam& adam, const RolloutBatch& batch, const AlignConfig& cfg,
                  const PpoObserver& observer) {
  PolicyState grads{Weights::zeros(policy.weights.config), ScalarHead::zeros(policy.weights.config.width)};
  const ParamSet params = policy_params(policy);
  const ParamSet grad_set = policy_params(grads);
  PpoStats first;
  for (int pass = 0; pass < cfg.ppo_passes; ++pass) {
    grads.weights.set_zero();
    grads.value_head.weight.setZero();
    grads.value_head.bias.setZero();
    const PpoStats s = ppo_loss(policy, batch, cfg, &grads, observer);
    if (pass == 0) first = s;
    adam.step(params, grad_set);
  }
  check_finite(params, "PPO update");
  return first;
}

std::vector<int> generation_prompt(const Tokenizer& tok, const Problem& problem) {
  std::vector<int> ids{Tokenizer::kBos};
  const auto body = tok.encode(render_prompt_prefix(generate_instruction(problem)));
  ids.insert(ids.end(), body.begin(), body.end());
  return ids;
}

std::string completion_code(const Tokenizer& tok, std::span<const int> completion) {
  const std::string text = tok.decode(std::vector<int>(completion.begin(), completion.end()));
  if (auto code = extract_code(text)) return *code;
  return text;
}

std::string align_history_csv(std::span<const AlignHistoryRow> rows) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,batch,mean_reward,kl_estimate,loss\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.batch << ',' << r.mean_reward << ',' << r.kl_estimate << ',' << r.loss << '\n';
  }
  return out.str();
}

RlpfResult rlpf_train(const Weights& sft, const Tokenizer& tok, std::span<const Problem* const> problems,
                      const ExecBackend& backend, const RewardModel* reward_model, const AlignConfig& cfg,
                      const std::function<void(const PolicyState&, int)>& on_epoch) {
  cfg.validate();
  if (problems.empty()) throw ValidationError("RLPF needs at least one problem");
  RlpfResult result{make_policy(sft, cfg.seed), {}};
  PolicyState& policy = result.policy;
  Adam adam(policy_params(policy), cfg.adam);

  std::vector<std::vector<int>> prompts;
  for (const Problem* p : problems) prompts.push_back(generation_prompt(tok, *p));
  std::vector<std::size_t> order(problems.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng order_rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(epoch)));
    order_rng.shuffle(std::span<std::size_t>(order));
    Rng sample_rng(Rng::mix(cfg.seed ^ cfg.rollout.seed, 0x5eedULL + static_cast<std::uint64_t>(epoch)));
    int batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += bs, ++batch_index) {
      RolloutBatch batch;
      for (std::size_t i = b; i < std::min(order.size(), b + bs); ++i) {
        const Problem& problem = *problems[order[i]];
        Rollout r;
        r.problem_id = problem.id;
        r.prompt = prompts[order[i]];
        r.completion = sample(policy.weights, r.prompt, cfg.rollout, sample_rng);
        if (r.completion.empty()) continue;
        const CompositeReward cr = composite_reward(problem, completion_code(tok, r.completion), backend, reward_model);
        r.reward = cr.value;
        r.reward_source = cr.source;
        score_rollout(r, policy, sft);
        batch.rollouts.push_back(std::move(r));
      }
      if (batch.rollouts.empty()) continue;
      compute_advantages(batch, cfg);

      AlignHistoryRow row;
      row.epoch = epoch + 1;
      row.batch = batch_index;
      std::vector<double> lp, ref;
      for (const auto& r : batch.rollouts) {
        row.mean_reward += r.reward / static_cast<double>(batch.rollouts.size());
        lp.insert(lp.end(), r.policy_logprobs.begin(), r.policy_logprobs.end());
        ref.insert(ref.end(), r.ref_logprobs.begin(), r.ref_logprobs.end());
      }
      row.kl_estimate = kl_estimate(lp, ref);
      const PpoStats stats = ppo_step(policy, adam, batch, cfg);
      row.loss = stats.policy_loss + stats.value_loss;
      result.history.push_back(row);
    }
    if (on_epoch) on_epoch(policy, epoch + 1);
  }
  return result;
}

}  // namespace perfalign

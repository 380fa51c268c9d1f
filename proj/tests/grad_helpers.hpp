#pragma once

// Finite-difference checks of every trained objective on a small random model.

#include <string>
#include <vector>

#include "perfalign/align.hpp"
#include "perfalign/model/grad_check.hpp"
#include "perfalign/reward.hpp"
#include "perfalign/rng.hpp"

namespace gradcheck {

using namespace perfalign;

inline ModelConfig desk_config(const Tokenizer& tok) {
  return {.layers = 4, .heads = 2, .width = 16, .context = 40, .vocab = tok.size()};
}

// Random weights with non-trivial norms so every path carries gradient.
inline Weights random_weights(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  Weights w = Weights::init(cfg, rng);
  w.for_each([&](const std::string& name, Matrix& m) {
    if (name.find("gain") != std::string::npos) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 1.0 + 0.3 * rng.normal();
    } else {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += 0.05 * rng.normal();
    }
  });
  return w;
}

inline void append(std::vector<Matrix>& out, Weights& g) {
  g.for_each([&](const std::string&, Matrix& m) { out.push_back(m); });
}

inline void append(std::vector<Matrix>& out, ScalarHead& h) {
  out.push_back(h.weight);
  out.push_back(h.bias);
}

inline std::vector<int> tokens_of(const Tokenizer& tok, const std::string& text) {
  std::vector<int> ids{Tokenizer::kBos};
  for (int id : tok.encode(text)) ids.push_back(id);
  return ids;
}

inline GradCheckOptions options() {
  GradCheckOptions o;
  o.samples = 96;
  o.step = 1e-5;
  o.floor = 1e-6;
  return o;
}

inline GradCheckReport sft_cross_entropy(std::uint64_t seed) {
  const Tokenizer tok;
  Weights w = random_weights(desk_config(tok), seed);
  const SftExample ex = make_sft_example(tok, {PromptKind::generate, "Print 2*in0.", "```\nprint(2*in0);\n```", "p"});
  ParamSet params = params_of(w);
  Rng rng(seed + 1);
  return grad_check(params, [&](std::vector<Matrix>* grads) {
    if (grads == nullptr) return sft_loss(w, ex);
    Weights g = Weights::zeros(w.config);
    const double loss = sft_loss(w, ex, &g);
    grads->clear();
    append(*grads, g);
    return loss;
  }, rng, options());
}

inline GradCheckReport reward_pairwise(std::uint64_t seed) {
  const Tokenizer tok;
  RewardModel m{random_weights(desk_config(tok), seed), {}, tok};
  Rng head_rng(seed + 2);
  m.head = ScalarHead::init(m.backbone.config.width, head_rng, 0.5);
  const int ctx = m.backbone.config.context;
  const std::vector<RewardExample> examples{
      {"a", reward_input(tok, "Sum.", "print(in0);", ctx), reward_input(tok, "Sum.", "s=0;while(s<in0){s=s+1;}", ctx), 2.5},
      {"b", reward_input(tok, "Sq.", "print(in0*in0);", ctx), reward_input(tok, "Sq.", "print(1);", ctx), 0.0}};
  ParamSet params = params_of(m.backbone);
  add_head(params, m.head, "reward_head");
  Rng rng(seed + 1);
  return grad_check(params, [&](std::vector<Matrix>* grads) {
    if (grads == nullptr) return reward_batch_loss(m, examples);
    Weights g = Weights::zeros(m.backbone.config);
    ScalarHead hg = ScalarHead::zeros(m.backbone.config.width);
    const double loss = reward_batch_loss(m, examples, &g, &hg);
    grads->clear();
    append(*grads, g);
    append(*grads, hg);
    return loss;
  }, rng, options());
}

inline GradCheckReport dpa_preference(std::uint64_t seed) {
  const Tokenizer tok;
  const Weights reference = random_weights(desk_config(tok), seed + 7);
  Weights policy = random_weights(desk_config(tok), seed);
  std::vector<DpaExample> ex{
      {"a", tokens_of(tok, "Sum:"), response_tokens(tok, "print(in0);"), response_tokens(tok, "s=in0;print(s);"), 1.5, 0, 0},
      {"b", tokens_of(tok, "Sq:"), response_tokens(tok, "print(in0*in0);"), response_tokens(tok, "print(0);"), 0.0, 0, 0}};
  prepare_dpa(ex, reference);
  ParamSet params = params_of(policy);
  Rng rng(seed + 1);
  return grad_check(params, [&](std::vector<Matrix>* grads) {
    if (grads == nullptr) return dpa_batch_loss(policy, ex, 0.6);
    Weights g = Weights::zeros(policy.config);
    const double loss = dpa_batch_loss(policy, ex, 0.6, &g);
    grads->clear();
    append(*grads, g);
    return loss;
  }, rng, options());
}

inline GradCheckReport ppo_surrogate(std::uint64_t seed) {
  const Tokenizer tok;
  const ModelConfig cfg = desk_config(tok);
  const Weights reference = random_weights(cfg, seed + 7);
  // Behaviour policy differs from the trained one so ratios are not all 1.
  PolicyState behaviour{random_weights(cfg, seed + 9), {}};
  Rng head_rng(seed + 3);
  behaviour.value_head = ScalarHead::init(cfg.width, head_rng, 0.3);
  PolicyState policy{random_weights(cfg, seed), behaviour.value_head};

  AlignConfig ac;
  ac.clip_eps = 0.2;
  RolloutBatch batch;
  const std::vector<std::pair<std::string, std::string>> items{{"Sum:", "print(in0+1);"}, {"Sq:", "x=in0;print(x*x);"}};
  double reward = 1.5;
  for (const auto& [prompt, completion] : items) {
    Rollout r;
    r.problem_id = prompt;
    r.prompt = tokens_of(tok, prompt);
    r.completion = tok.encode(completion);
    r.completion.push_back(Tokenizer::kEos);
    score_rollout(r, behaviour, reference);
    r.reward = reward;
    reward = -1.0;
    batch.rollouts.push_back(std::move(r));
  }
  compute_advantages(batch, ac);

  ParamSet params = params_of(policy.weights);
  add_head(params, policy.value_head, "value_head");
  Rng rng(seed + 1);
  return grad_check(params, [&](std::vector<Matrix>* grads) {
    if (grads == nullptr) {
      const PpoStats s = ppo_loss(policy, batch, ac);
      return s.policy_loss + s.value_loss;
    }
    PolicyState g{Weights::zeros(cfg), ScalarHead::zeros(cfg.width)};
    const PpoStats s = ppo_loss(policy, batch, ac, &g);
    grads->clear();
    append(*grads, g.weights);
    append(*grads, g.value_head);
    return s.policy_loss + s.value_loss;
  }, rng, options());
}

}  // namespace gradcheck

#include <cmath>
#include <numeric>

#include "perfalign/align.hpp"
#include "perfalign/error.hpp"
#include "perfalign/rng.hpp"

namespace perfalign {

double dpa_loss(double policy_fast, double ref_fast, double policy_slow, double ref_slow, double mu, double beta) {
  return neg_log_sigmoid(beta * (policy_fast - ref_fast) - beta * (policy_slow - ref_slow) - mu);
}

std::vector<int> response_tokens(const Tokenizer& tok, std::string_view code) {
  auto ids = tok.encode(fence_code(code) + "\n");
  ids.push_back(Tokenizer::kEos);
  return ids;
}

std::vector<DpaExample> dpa_examples(const Corpus& corpus, std::span<const Triplet> triplets, const Tokenizer& tok,
                                     const MarginConfig& margin_cfg) {
  std::vector<DpaExample> out;
  out.reserve(triplets.size());
  for (const auto& t : triplets) {
    DpaExample ex;
    ex.problem_id = t.problem_id;
    ex.prompt = generation_prompt(tok, corpus.problem(t.problem_id));
    ex.fast = response_tokens(tok, t.fast.source_code);
    ex.slow = response_tokens(tok, t.slow.source_code);
    ex.margin = margin(t, margin_cfg);
    out.push_back(std::move(ex));
  }
  return out;
}

void prepare_dpa(std::span<DpaExample> examples, const Weights& reference) {
  for (auto& ex : examples) {
    ex.ref_fast = sequence_logprob(reference, ex.prompt, ex.fast);
    ex.ref_slow = sequence_logprob(reference, ex.prompt, ex.slow);
  }
}

namespace {

struct Scored {
  ForwardCache cache;
  double logprob = 0.0;
  std::size_t start = 0;
  std::size_t count = 0;
};

void score(const Weights& w, const std::vector<int>& prompt, const std::vector<int>& completion, Scored& out) {
  out.start = prompt.size();
  out.count = completion.size();
  forward(w, concat(prompt, completion), out.cache);
  const auto lp = target_logprobs(out.cache, out.start);
  out.logprob = std::accumulate(lp.begin(), lp.end(), 0.0);
}

void accumulate_grad(const Weights& w, const Scored& s, double scale, Weights& grads) {
  const std::vector<double> coeff(s.count, scale);
  backward(w, s.cache, target_logprob_grad(s.cache, s.start, coeff), Matrix(), grads);
}

struct BatchStats {
  double loss = 0.0;
  double implicit_reward = 0.0;  // mean beta * (fast log-ratio - slow log-ratio)
  double kl = 0.0;               // per-token policy/reference log-ratio
};

BatchStats dpa_batch(const Weights& policy, std::span<const DpaExample> examples, double beta, Weights* grads) {
  BatchStats st;
  if (examples.empty()) return st;
  const double inv = 1.0 / static_cast<double>(examples.size());
  double log_ratio = 0.0;
  double tokens = 0.0;
  Scored fast, slow;
  for (const auto& ex : examples) {
    score(policy, ex.prompt, ex.fast, fast);
    score(policy, ex.prompt, ex.slow, slow);
    const double rf = fast.logprob - ex.ref_fast;
    const double rs = slow.logprob - ex.ref_slow;
    const double z = beta * rf - beta * rs - ex.margin;
    st.loss += inv * neg_log_sigmoid(z);
    st.implicit_reward += inv * beta * (rf - rs);
    log_ratio += rf + rs;
    tokens += static_cast<double>(fast.count + slow.count);
    if (grads != nullptr) {
      const double dz = -inv * sigmoid(-z);  // d loss / d z
      accumulate_grad(policy, fast, dz * beta, *grads);
      accumulate_grad(policy, slow, -dz * beta, *grads);
    }
  }
  st.kl = tokens > 0.0 ? log_ratio / tokens : 0.0;
  return st;
}

}  // namespace

double dpa_batch_loss(const Weights& policy, std::span<const DpaExample> examples, double beta, Weights* grads) {
  return dpa_batch(policy, examples, beta, grads).loss;
}

DpaResult dpa_train(const Weights& sft, std::vector<DpaExample> examples, const DpaConfig& cfg) {
  if (examples.empty()) throw ValidationError("DPA needs at least one triplet");
  if (!(cfg.beta >= 0.0) || cfg.batch_size <= 0 || cfg.epochs < 0) {
    throw ValidationError("DPA beta, batch size and epochs must be valid");
  }
  const Weights reference = sft;
  prepare_dpa(examples, reference);

  DpaResult result{sft, {}};
  Weights& policy = result.policy;
  Weights grads = Weights::zeros(policy.config);
  const ParamSet params = params_of(policy);
  const ParamSet grad_set = params_of(grads);
  Adam adam(params, cfg.adam);

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<DpaExample> batch;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span<std::size_t>(order));
    int batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += bs, ++batch_index) {
      batch.clear();
      for (std::size_t i = b; i < std::min(order.size(), b + bs); ++i) batch.push_back(examples[order[i]]);
      grads.set_zero();
      const BatchStats st = dpa_batch(policy, batch, cfg.beta, &grads);
      if (!std::isfinite(st.loss)) {
        throw NumericalError("DPA diverged: non-finite loss at step " + std::to_string(adam.steps() + 1));
      }
      adam.step(params, grad_set);
      // Values describe the policy before this update.
      result.history.push_back({epoch + 1, batch_index, st.implicit_reward, st.kl, st.loss});
    }
  }
  check_finite(params, "DPA result");
  return result;
}

double dpa_accuracy(const Weights& policy, const Weights& reference, std::span<const DpaExample> examples) {
  std::vector<std::pair<double, double>> ratios;
  ratios.reserve(examples.size());
  for (const auto& ex : examples) {
    ratios.emplace_back(sequence_logprob(policy, ex.prompt, ex.fast) - sequence_logprob(reference, ex.prompt, ex.fast),
                        sequence_logprob(policy, ex.prompt, ex.slow) - sequence_logprob(reference, ex.prompt, ex.slow));
  }
  return pairwise_accuracy(ratios);
}

}  // namespace perfalign

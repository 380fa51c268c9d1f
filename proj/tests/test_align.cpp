#include <cmath>

#include "doctest.h"
#include "grad_helpers.hpp"
#include "perfalign/align.hpp"
#include "perfalign/error.hpp"
#include "perfalign/model/checkpoint.hpp"
#include "separable.hpp"

using namespace perfalign;

namespace {

double softplus_ld(long double x) { return static_cast<double>(std::log1p(std::exp(x))); }

Weights tiny(std::uint64_t seed) {
  const Tokenizer tok;
  return gradcheck::random_weights({.layers = 1, .heads = 2, .width = 16, .context = 128, .vocab = tok.size()}, seed);
}

}  // namespace

TEST_CASE("kl estimate and clipping") {
  const std::vector<double> a{-1, -2}, b{-1.5, -2.5};
  CHECK(kl_estimate(a, a) == 0.0);
  CHECK(kl_estimate(a, b) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(kl_estimate(std::vector<double>{-0.71}, std::vector<double>{-1.0}) == doctest::Approx(0.29).epsilon(1e-12));
  CHECK_THROWS_AS(kl_estimate(a, std::vector<double>{-1}), ValidationError);
  CHECK(clip_ratio(1.5, 0.2) == doctest::Approx(1.2));
  CHECK(clip_ratio(0.7, 0.2) == doctest::Approx(0.8));
  CHECK(clip_ratio(1.1, 0.2) == 1.1);
}

TEST_CASE("dpa loss closed forms") {
  CHECK(std::abs(dpa_loss(-3, -3, -5, -5, 0, 0.6) - std::log(2.0)) <= 1e-12);
  // Fast log-ratio exceeds slow log-ratio by 1.
  CHECK(std::abs(dpa_loss(-2, -3, -5, -5, 0, 0.6) - softplus_ld(-0.6L)) <= 1e-12);
  CHECK(std::abs(dpa_loss(-2, -3, -5, -5, 0, 0.6) - 0.4375) <= 1e-4);
  CHECK(std::abs(dpa_loss(-2, -3, -5, -5, 3, 0.6) - softplus_ld(2.4L)) <= 1e-12);
  CHECK(std::abs(dpa_loss(-2, -3, -5, -5, 3, 0.6) - 2.4869) <= 1e-4);

  Rng rng(4);
  for (int i = 0; i < 300; ++i) {
    const double pf = -10 * rng.uniform(), rf = -10 * rng.uniform(), ps = -10 * rng.uniform(), rs = -10 * rng.uniform();
    const double mu = 3 * rng.uniform(), c = 50 * rng.normal(), d = 50 * rng.normal();
    const double base = dpa_loss(pf, rf, ps, rs, mu, 0.6);
    CHECK(std::abs(dpa_loss(pf + c, rf + c, ps + d, rs + d, mu, 0.6) - base) <= 1e-12 * std::max(1.0, base));
    // At initialization the loss is -log sigmoid(-mu).
    CHECK(std::abs(dpa_loss(pf, pf, ps, ps, mu, 0.6) - softplus_ld(mu)) <= 1e-12);
  }
}

TEST_CASE("advantages follow GAE and are whitened") {
  AlignConfig cfg;
  RolloutBatch batch;
  Rollout a;
  a.completion = {5, 6, 7};
  a.policy_logprobs = {-1.0, -0.5, -2.0};
  a.ref_logprobs = {-1.2, -0.4, -1.0};
  a.values = {0.3, -0.1, 0.2};
  a.reward = 1.5;
  Rollout b;
  b.completion = {8, 9};
  b.policy_logprobs = {-0.1, -0.3};
  b.ref_logprobs = {-0.1, -0.2};
  b.values = {0.0, 0.5};
  b.reward = -1.0;
  batch.rollouts = {a, b};
  compute_advantages(batch, cfg);

  std::vector<double> raw;
  std::vector<std::vector<double>> returns;
  for (const Rollout& r : {a, b}) {
    const std::size_t n = r.completion.size();
    std::vector<double> delta(n), ret(n);
    for (std::size_t t = 0; t < n; ++t) {
      const double reward = -0.1 * (r.policy_logprobs[t] - r.ref_logprobs[t]) + (t + 1 == n ? r.reward : 0.0);
      const double next = t + 1 < n ? r.values[t + 1] : 0.0;
      delta[t] = reward + next - r.values[t];
    }
    for (std::size_t t = 0; t < n; ++t) {
      double adv = 0;
      for (std::size_t k = t; k < n; ++k) adv += std::pow(0.95, double(k - t)) * delta[k];
      raw.push_back(adv);
      ret[t] = adv + r.values[t];
    }
    returns.push_back(ret);
  }
  double mean = 0, var = 0;
  for (double x : raw) mean += x / double(raw.size());
  for (double x : raw) var += (x - mean) * (x - mean) / double(raw.size());
  std::size_t k = 0;
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t t = 0; t < batch.rollouts[r].advantages.size(); ++t, ++k) {
      CHECK(batch.rollouts[r].advantages[t] == doctest::Approx((raw[k] - mean) / (std::sqrt(var) + 1e-8)).epsilon(1e-12));
      CHECK(batch.rollouts[r].returns[t] == doctest::Approx(returns[r][t]).epsilon(1e-12));
    }
  }
}

TEST_CASE("PPO surrogate gradient") {
  const auto r = gradcheck::ppo_surrogate(41);
  INFO(r.worst, " analytic ", r.worst_analytic, " numeric ", r.worst_numeric);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("DPA gradient") {
  const auto r = gradcheck::dpa_preference(51);
  INFO(r.worst, " analytic ", r.worst_analytic, " numeric ", r.worst_numeric);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("PPO with zero advantages leaves the policy untouched") {
  const Tokenizer tok;
  PolicyState policy = make_policy(tiny(3));
  const Weights reference = tiny(4);
  RolloutBatch batch;
  Rollout r;
  r.prompt = gradcheck::tokens_of(tok, "Sum:");
  r.completion = tok.encode("print(in0);");
  score_rollout(r, policy, reference);
  r.advantages.assign(r.completion.size(), 0.0);
  r.returns = r.values;
  batch.rollouts.push_back(r);
  AlignConfig cfg;
  cfg.value_coeff = 0.0;
  PolicyState grads{Weights::zeros(policy.weights.config), ScalarHead::zeros(16)};
  ppo_loss(policy, batch, cfg, &grads);
  double norm = 0;
  grads.weights.for_each([&](const std::string&, const Matrix& m) { norm += m.squaredNorm(); });
  CHECK(norm == 0.0);

  const Weights before = policy.weights;
  ParamSet params = params_of(policy.weights);
  add_head(params, policy.value_head, "value_head");
  Adam adam(params, cfg.adam);
  ppo_step(policy, adam, batch, cfg);
  CHECK(policy.weights == before);
}

TEST_CASE("clipping rule holds for every token") {
  const Tokenizer tok;
  const Weights reference = tiny(5);
  PolicyState behaviour = make_policy(tiny(6));
  PolicyState policy = make_policy(tiny(7));
  AlignConfig cfg;
  RolloutBatch batch;
  double reward = 2.0;
  for (const char* code : {"print(in0*3);", "s=0;while(s<in0){s=s+1;}print(s);", "x=in0;print(x);"}) {
    Rollout r;
    r.prompt = gradcheck::tokens_of(tok, "Task:");
    r.completion = tok.encode(code);
    score_rollout(r, behaviour, reference);
    r.reward = reward;
    reward -= 1.5;
    batch.rollouts.push_back(r);
  }
  compute_advantages(batch, cfg);
  int seen = 0, clipped = 0;
  ParamSet params = params_of(policy.weights);
  add_head(params, policy.value_head, "value_head");
  Adam adam(params, cfg.adam);
  ppo_step(policy, adam, batch, cfg, [&](const TokenObservation& o) {
    ++seen;
    CHECK(o.clipped_ratio >= 1 - cfg.clip_eps - 1e-15);
    CHECK(o.clipped_ratio <= 1 + cfg.clip_eps + 1e-15);
    CHECK(o.objective == std::min(o.ratio * o.advantage, o.clipped_ratio * o.advantage));
    clipped += o.ratio != o.clipped_ratio;
  });
  CHECK(seen > 0);
  CHECK(clipped > 0);
}

TEST_CASE("KL of a policy against itself is zero") {
  const Tokenizer tok;
  const Weights w = tiny(8);
  Rollout r;
  r.prompt = gradcheck::tokens_of(tok, "Go:");
  r.completion = tok.encode("print(1);");
  score_rollout(r, make_policy(w), w);
  CHECK(kl_estimate(r.policy_logprobs, r.ref_logprobs) == 0.0);
}

namespace {

struct RlpfSetup {
  Corpus corpus;
  std::vector<const Problem*> problems;
  Tokenizer tok;
  Weights sft;
};

RlpfSetup rlpf_setup() {
  RlpfSetup s;
  s.corpus = label_corpus(make_toy_corpus({.seed = 3, .contest_problems = 8, .synthetic_problems = 0}), MinilangBackend{});
  for (const auto& p : s.corpus.problems()) s.problems.push_back(&p);
  s.sft = tiny(9);
  return s;
}

}  // namespace

TEST_CASE("RLPF with zero epochs returns the input") {
  const RlpfSetup s = rlpf_setup();
  AlignConfig cfg;
  cfg.epochs = 0;
  const RlpfResult r = rlpf_train(s.sft, s.tok, s.problems, MinilangBackend{}, nullptr, cfg);
  CHECK(r.policy.weights == s.sft);
  CHECK(r.history.empty());
}

TEST_CASE("RLPF is deterministic and reports finite KL") {
  const RlpfSetup s = rlpf_setup();
  AlignConfig cfg;
  cfg.epochs = 2;
  cfg.adam.lr = 1e-3;
  cfg.rollout.max_new_tokens = 24;
  int calls = 0;
  const RlpfResult a = rlpf_train(s.sft, s.tok, s.problems, MinilangBackend{}, nullptr, cfg,
                                  [&](const PolicyState&, int epoch) { CHECK(epoch == ++calls); });
  CHECK(calls == 2);
  const RlpfResult b = rlpf_train(s.sft, s.tok, s.problems, MinilangBackend{}, nullptr, cfg);
  CHECK(a.policy.weights == b.policy.weights);
  REQUIRE(a.history.size() == 4);
  for (const auto& row : a.history) {
    CHECK(std::isfinite(row.kl_estimate));
    CHECK(row.mean_reward == -1.0);  // an untrained model writes no valid program
  }
  CHECK(align_history_csv(a.history).rfind("epoch,batch,mean_reward,kl_estimate,loss\n", 0) == 0);
}

TEST_CASE("a large KL coefficient keeps the policy closer") {
  // Synthetic problems scored by a random reward head, so rewards vary.
  const RlpfSetup base = rlpf_setup();
  const Corpus syn = make_toy_corpus({.seed = 4, .contest_problems = 0, .synthetic_problems = 8});
  std::vector<const Problem*> problems;
  for (const auto& p : syn.problems()) problems.push_back(&p);
  Checkpoint ck;
  ck.weights = base.sft;
  ck.tokenizer = base.tok;
  const RewardModel rm = make_reward_model(ck, 12, 2.0);
  auto final_kl = [&](double eta) {
    AlignConfig cfg;
    cfg.epochs = 3;
    cfg.kl_coeff = eta;
    cfg.adam.lr = 3e-3;
    cfg.rollout.max_new_tokens = 24;
    const RlpfResult r = rlpf_train(base.sft, base.tok, problems, MinilangBackend{}, &rm, cfg);
    double kl = 0;
    Rng rng(77);
    for (int rep = 0; rep < 4; ++rep) {
      for (const Problem* p : problems) {
        Rollout ro;
        ro.prompt = generation_prompt(base.tok, *p);
        ro.completion = sample(r.policy.weights, ro.prompt, cfg.rollout, rng);
        if (ro.completion.empty()) continue;
        score_rollout(ro, r.policy, base.sft);
        kl += kl_estimate(ro.policy_logprobs, ro.ref_logprobs);
      }
    }
    return kl;
  };
  const double strong = final_kl(100.0), weak = final_kl(0.1);
  INFO("eta=100: ", strong, "  eta=0.1: ", weak);
  CHECK(strong < weak);
}

TEST_CASE("DPA accuracy and training") {
  const separable::Data d = separable::make(30, 3, 8);
  const Tokenizer tok;
  const Weights sft = tiny(10);
  auto train = dpa_examples(d.corpus, d.train, tok);
  auto eval = dpa_examples(d.corpus, d.eval, tok);
  REQUIRE(!eval.empty());
  CHECK(dpa_accuracy(sft, sft, eval) == 0.0);

  // Initial loss is the margin term only.
  prepare_dpa(train, sft);
  double expected = 0;
  for (const auto& e : train) expected += softplus_ld(e.margin) / double(train.size());
  CHECK(std::abs(dpa_batch_loss(sft, train, 0.6) - expected) <= 1e-12);

  // beta = 0 and mu = 0: no gradient.
  std::vector<DpaExample> flat = train;
  for (auto& e : flat) e.margin = 0;
  Weights g = Weights::zeros(sft.config);
  CHECK(dpa_batch_loss(sft, flat, 0.0, &g) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  double norm = 0;
  g.for_each([&](const std::string&, const Matrix& m) { norm += m.squaredNorm(); });
  CHECK(norm == 0.0);

  // Accuracy agrees with a direct count of log-ratio comparisons.
  const Weights other = tiny(11);
  int wins = 0;
  for (const auto& e : eval) {
    const double f = sequence_logprob(other, e.prompt, e.fast) - sequence_logprob(sft, e.prompt, e.fast);
    const double s = sequence_logprob(other, e.prompt, e.slow) - sequence_logprob(sft, e.prompt, e.slow);
    wins += f > s;
  }
  CHECK(dpa_accuracy(other, sft, eval) == doctest::Approx(double(wins) / double(eval.size())));

  DpaConfig cfg;
  cfg.adam.lr = 1e-3;
  cfg.batch_size = 8;
  const DpaResult r = dpa_train(sft, train, cfg);
  CHECK(dpa_accuracy(r.policy, sft, eval) > 0.0);
  CHECK(dpa_train(sft, train, cfg).policy == r.policy);
  REQUIRE(!r.history.empty());
  CHECK(r.history.front().loss == doctest::Approx(expected).epsilon(1e-9));
}

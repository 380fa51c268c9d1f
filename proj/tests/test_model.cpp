#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "grad_helpers.hpp"
#include "perfalign/error.hpp"
#include "perfalign/model/checkpoint.hpp"
#include "perfalign/model/sampling.hpp"
#include "perfalign/model/training.hpp"
#include "perfalign/pipeline.hpp"

using namespace perfalign;

namespace {

ModelConfig small(const Tokenizer& tok) { return {.layers = 2, .heads = 2, .width = 16, .context = 48, .vocab = tok.size()}; }

// Final norm collapses every position to e0, so the logits equal lm_head row 0.
Weights constant_logits(const ModelConfig& cfg, const std::vector<double>& row0) {
  Rng rng(1);
  Weights w = Weights::init(cfg, rng);
  w.lnf_gain.setZero();
  w.lnf_bias.setZero();
  w.lnf_bias(0, 0) = 1.0;
  w.lm_head.setZero();
  for (std::size_t v = 0; v < row0.size(); ++v) w.lm_head(0, static_cast<Eigen::Index>(v)) = row0[v];
  return w;
}

Tokenizer specials_plus(int extra) {
  std::vector<std::string> v{"<pad>", "<bos>", "<eos>", "<unk>"};
  for (int i = 0; i < extra; ++i) v.push_back(std::string(1, static_cast<char>('a' + i)));
  return Tokenizer(v);
}

}  // namespace

TEST_CASE("tokenizer") {
  const Tokenizer tok;
  CHECK(tok.size() < 200);
  const Corpus toy = make_toy_corpus({.seed = 1, .contest_problems = 20, .synthetic_problems = 2});
  for (const auto& s : toy.solutions()) {
    const auto ids = tok.encode(s.source_code);
    for (int id : ids) {
      CHECK(id >= 4);
      CHECK(id < tok.size());
    }
    CHECK(tok.decode(ids) == s.source_code);
  }
  const std::string layout = render_prompt({PromptKind::generate, "Print 3.\n\tok", "```\nprint(3);\n```", "p"});
  CHECK(tok.decode(tok.encode(layout)) == layout);
  CHECK(tok.encode("while").size() == 1);
  CHECK(tok.decode({Tokenizer::kBos, tok.encode("x")[0], Tokenizer::kEos}) == "x");
}

TEST_CASE("zero head gives a uniform distribution") {
  const Tokenizer tok;
  Rng rng(3);
  const Weights w = Weights::init(small(tok), rng, true);
  const Matrix l = logits(w, tok.encode("print(1);"));
  const Matrix p = softmax_rows(l);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    CHECK(std::abs(p.row(r).sum() - 1.0) <= 1e-12);
    CHECK(p.row(r).maxCoeff() == doctest::Approx(1.0 / tok.size()).epsilon(1e-12));
    CHECK(p.row(r).minCoeff() == doctest::Approx(1.0 / tok.size()).epsilon(1e-12));
  }
}

TEST_CASE("causality") {
  const Tokenizer tok;
  const Weights w = gradcheck::random_weights(small(tok), 5);
  std::vector<int> a = tok.encode("x=in0;print(x*2);");
  std::vector<int> b = a;
  for (std::size_t i = 8; i < b.size(); ++i) b[i] = tok.encode("7")[0];
  const Matrix la = logits(w, a), lb = logits(w, b);
  for (Eigen::Index r = 0; r < 8; ++r) CHECK((la.row(r) - lb.row(r)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((la.row(9) - lb.row(9)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("forward input checks") {
  const Tokenizer tok;
  Rng rng(1);
  const Weights w = Weights::init(small(tok), rng);
  std::vector<int> too_long(49, 5);
  CHECK_THROWS_AS(logits(w, too_long), LengthError);
  CHECK_THROWS_AS(logits(w, std::vector<int>{tok.size()}), ValidationError);
  CHECK_THROWS_AS(logits(w, std::vector<int>{}), ValidationError);
}

TEST_CASE("decode state matches the full forward pass") {
  const Tokenizer tok;
  const Weights w = gradcheck::random_weights(small(tok), 8);
  const std::vector<int> seq = tok.encode("s=0;while(s<9){s=s+2;}print(s);");
  const Matrix full = logits(w, seq);
  DecodeState st(w);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const RowVector row = st.push(seq[t]);
    CHECK((row - full.row(static_cast<Eigen::Index>(t))).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("sequence log-probabilities") {
  const Tokenizer four = specials_plus(0);
  const ModelConfig cfg{.layers = 1, .heads = 1, .width = 4, .context = 8, .vocab = 4};
  const std::vector<int> prompt{1};

  const Weights half = constant_logits(cfg, {0, 0, -1000, -1000});
  CHECK(std::abs(sequence_logprob(half, prompt, std::vector<int>{0, 1}) - (-2.0 * std::log(2.0))) <= 1e-12);

  const Weights sure = constant_logits(cfg, {0, -1000, -1000, -1000});
  CHECK(sequence_logprob(sure, prompt, std::vector<int>{0}) == 0.0);
  CHECK(sequence_logprob(sure, prompt, std::vector<int>{}) == 0.0);

  // Additivity and agreement with a scalar re-evaluation of the softmax.
  const Tokenizer tok;
  const Weights w = gradcheck::random_weights(small(tok), 2);
  const auto p = tok.encode("Sum:"), a = tok.encode("print("), b = tok.encode("in0);");
  const double whole = sequence_logprob(w, p, concat(a, b));
  CHECK(std::abs(whole - (sequence_logprob(w, p, a) + sequence_logprob(w, concat(p, a), b))) <= 1e-10);
  const auto all = concat(p, concat(a, b));
  const Matrix l = logits(w, all);
  double manual = 0;
  for (std::size_t t = p.size(); t < all.size(); ++t) {
    const auto row = l.row(static_cast<Eigen::Index>(t - 1));
    double z = 0;
    for (Eigen::Index v = 0; v < row.size(); ++v) z += std::exp(row(v));
    manual += row(all[t]) - std::log(z);
  }
  CHECK(std::abs(whole - manual) <= 1e-10);
}

TEST_CASE("perplexity") {
  const Tokenizer sixteen = specials_plus(12);
  Rng rng(4);
  const Weights uniform = Weights::init({.layers = 1, .heads = 2, .width = 8, .context = 16, .vocab = 16}, rng, true);
  const std::vector<std::vector<int>> data{{1, 5, 6, 7, 2}, {1, 9, 2}};
  CHECK(std::abs(perplexity(uniform, data) - 16.0) <= 16.0 * 1e-12);

  const Weights sure = constant_logits({.layers = 1, .heads = 1, .width = 4, .context = 8, .vocab = 4}, {0, -1000, -1000, -1000});
  const std::vector<std::vector<int>> zeros{{0, 0, 0}};
  CHECK(perplexity(sure, zeros) == 1.0);

  const double p = perplexity_from_cross_entropy(0.48);
  CHECK(p > 1.616);
  CHECK(p < 1.62);
  CHECK(p == doctest::Approx(std::exp(0.48)));
}

TEST_CASE("sampling distribution") {
  RowVector logp(4);
  logp << std::log(0.5), std::log(0.3), std::log(0.15), std::log(0.05);
  SampleConfig c;
  c.top_p = 0.8;
  const auto d = sampling_distribution(logp, c);
  CHECK(d[0] == doctest::Approx(0.625).epsilon(1e-12));
  CHECK(d[1] == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(d[2] == 0.0);
  CHECK(d[3] == 0.0);

  SampleConfig full;
  const auto untouched = sampling_distribution(logp, full);
  for (int i = 0; i < 4; ++i) CHECK(untouched[static_cast<std::size_t>(i)] == doctest::Approx(std::exp(logp(i))).epsilon(1e-12));

  SampleConfig greedy;
  greedy.temperature = 0.0;
  greedy.top_k = 3;
  greedy.top_p = 0.1;
  CHECK(sampling_distribution(logp, greedy) == std::vector<double>{1, 0, 0, 0});

  SampleConfig k2;
  k2.top_k = 2;
  const auto dk = sampling_distribution(logp, k2);
  CHECK(dk[0] == doctest::Approx(0.625));
  CHECK(dk[2] == 0.0);

  SampleConfig hot;
  hot.temperature = 2.0;
  const auto dh = sampling_distribution(logp, hot);
  double z = 0;
  for (double x : {0.5, 0.3, 0.15, 0.05}) z += std::sqrt(x);
  CHECK(dh[1] == doctest::Approx(std::sqrt(0.3) / z).epsilon(1e-12));

  // Ties resolved toward the lower id.
  RowVector tie(3);
  tie << 0.0, 0.0, 0.0;
  SampleConfig third;
  third.top_p = 0.3;
  CHECK(sampling_distribution(tie, third) == std::vector<double>{1, 0, 0});

  SampleConfig bad;
  bad.top_p = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.temperature = -1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("empirical token frequencies stay within 3 sigma") {
  const std::vector<double> p{0.4, 0.25, 0.2, 0.1, 0.05};
  const int n = 100000;
  double chi_sum = 0;
  const int runs = 8;
  for (int seed = 1; seed <= runs; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    std::vector<int> count(p.size(), 0);
    for (int i = 0; i < n; ++i) ++count[static_cast<std::size_t>(draw_token(p, rng))];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double e = n * p[i];
      if (seed == 1) CHECK(std::abs(count[i] - e) <= 3 * std::sqrt(e * (1 - p[i])));
      chi_sum += (count[i] - e) * (count[i] - e) / e;
    }
  }
  // Mean chi-square over runs: 4 degrees of freedom, sd of the mean sqrt(8/8).
  CHECK(chi_sum / runs < 4.0 + 3.0);
}

TEST_CASE("sampling respects stopping rules and seeds") {
  const Tokenizer tok;
  const Weights w = gradcheck::random_weights(small(tok), 4);
  const std::vector<int> prompt{Tokenizer::kBos, 10, 11};
  SampleConfig c;
  c.max_new_tokens = 10;
  c.seed = 5;
  const auto a = sample(w, prompt, c);
  CHECK(a == sample(w, prompt, c));
  CHECK(a.size() <= 10);
  for (std::size_t i = 0; i + 1 < a.size(); ++i) CHECK(a[i] != Tokenizer::kEos);
  c.max_new_tokens = 1000;
  CHECK(prompt.size() + sample(w, prompt, c).size() <= 48);

  // Always EOS: a single token.
  std::vector<double> row(static_cast<std::size_t>(tok.size()), -1000.0);
  row[Tokenizer::kEos] = 0;
  const Weights eos = constant_logits(small(tok), row);
  CHECK(sample(eos, prompt, c) == std::vector<int>{Tokenizer::kEos});
}

TEST_CASE("checkpoint round trip is bit exact") {
  const Tokenizer tok;
  Checkpoint c = make_base_checkpoint(small(tok), tok, 12);
  c.role = Role::sft;
  c.extras["value_head.weight"] = Matrix::Random(16, 1);
  const auto path = std::filesystem::temp_directory_path() / "perfalign_ckpt_test.ckpt";
  save_checkpoint(c, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back == c);
  CHECK(back.role == Role::sft);
  bool bits = true;
  c.weights.for_each([&](const std::string& name, const Matrix& m) {
    back.weights.for_each([&](const std::string& n2, const Matrix& m2) {
      if (name == n2) bits = bits && std::memcmp(m.data(), m2.data(), sizeof(double) * std::size_t(m.size())) == 0;
    });
  });
  CHECK(bits);
  const std::vector<std::vector<int>> data{tok.encode("print(in0);")};
  CHECK(perplexity(back.weights, data) == perplexity(c.weights, data));
  std::filesystem::remove(path);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.ckpt"), PrerequisiteError);
  std::string bytes = serialize_checkpoint(c);
  CHECK_THROWS(parse_checkpoint(bytes.substr(0, 10)));
  bytes[3] = 'X';
  CHECK_THROWS(parse_checkpoint(bytes));
}

TEST_CASE("non-finite tensors are rejected") {
  const Tokenizer tok;
  Checkpoint c = make_base_checkpoint(small(tok), tok, 1);
  c.weights.lm_head(0, 0) = std::nan("");
  CHECK_THROWS_AS(serialize_checkpoint(c), NumericalError);
  ParamSet set = params_of(c.weights);
  CHECK_THROWS_AS(check_finite(set, "test"), NumericalError);
}

TEST_CASE("grad_check sanity") {
  Matrix theta = Matrix::Random(3, 4);
  ParamSet set;
  set.add("theta", theta);
  Rng rng(1);
  const auto quad = grad_check(set, [&](std::vector<Matrix>* g) {
    if (g) (*g)[0] = theta;
    return 0.5 * theta.squaredNorm();
  }, rng);
  CHECK(quad.max_rel_error < 1e-10);
  const auto flat = grad_check(set, [&](std::vector<Matrix>*) { return 3.0; }, rng);
  CHECK(flat.max_rel_error == 0.0);
}

TEST_CASE("SFT cross-entropy gradient") {
  const auto r = gradcheck::sft_cross_entropy(21);
  INFO(r.worst, " analytic ", r.worst_analytic, " numeric ", r.worst_numeric);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("SFT masking and symmetry") {
  const Tokenizer tok;
  const Weights w = gradcheck::random_weights(small(tok), 6);
  const SftExample a = make_sft_example(tok, {PromptKind::generate, "Print 1.", "```\nprint(1);\n```", "p"});
  SftExample b = a;
  // Change instruction tokens only; the loss is over the response.
  b.tokens[2] = tok.encode("Z")[0];
  b.tokens[3] = tok.encode("Q")[0];
  REQUIRE(a.response_start > 4);
  CHECK(sft_loss(w, a) != doctest::Approx(0.0));
  // Not equal in general: attention sees the instruction. Equality holds when
  // the response does not depend on it, i.e. with a single layer-free model.
  const Weights cst = constant_logits(small(tok), std::vector<double>(static_cast<std::size_t>(tok.size()), 0.0));
  CHECK(sft_loss(cst, a) == sft_loss(cst, b));
  CHECK(sft_loss(w, a) == sft_loss(w, a));
  CHECK(sft_loss(cst, a) == doctest::Approx(std::log(double(tok.size()))).epsilon(1e-12));
}

TEST_CASE("SFT training lowers held-out loss") {
  const Tokenizer tok;
  const Corpus labeled = label_corpus(make_toy_corpus({.seed = 2, .contest_problems = 30, .synthetic_problems = 0}), MinilangBackend{});
  std::vector<std::string> ids;
  for (const auto& p : labeled.problems()) ids.push_back(p.id);
  const PromptSet ps = build_sft_prompts(labeled, ids, 3);
  std::vector<SftExample> train, eval;
  for (std::size_t i = 0; i < ps.records.size(); ++i) {
    if (ps.records[i].kind != PromptKind::generate) continue;
    (i % 5 == 0 ? eval : train).push_back(make_sft_example(tok, ps.records[i]));
  }
  Rng rng(1);
  const Weights w0 = Weights::init({.layers = 1, .heads = 2, .width = 24, .context = 96, .vocab = tok.size()}, rng);
  SftConfig cfg;
  cfg.adam.lr = 3e-3;
  cfg.epochs = 6;
  cfg.batch_size = 4;
  std::vector<TrainLogRow> log;
  const Weights w1 = sft_train(w0, train, cfg, &log);
  CHECK(log.size() == 6 * ((train.size() + 3) / 4));
  CHECK(perplexity(w1, eval) < perplexity(w0, eval));
  CHECK(train_log_csv(log).rfind("step,loss,lr\n", 0) == 0);
  // Same seed, same weights.
  CHECK(sft_train(w0, train, cfg) == w1);
}

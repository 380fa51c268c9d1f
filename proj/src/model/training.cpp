#include "perfalign/model/training.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "perfalign/error.hpp"
#include "perfalign/rng.hpp"

namespace perfalign {

ParamSet params_of(Weights& w) {
  ParamSet set;
  w.for_each([&](const std::string& name, Matrix& m) { set.add(name, m); });
  return set;
}

void add_head(ParamSet& set, ScalarHead& head, const std::string& prefix) {
  head.for_each([&](const std::string& name, Matrix& m) { set.add(name, m); }, prefix);
}

void check_finite(const ParamSet& set, const std::string& what) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (!all_finite(*set.tensors[i])) {
      throw NumericalError(what + ": non-finite values in tensor '" + set.names[i] + "'");
    }
  }
}

Adam::Adam(const ParamSet& params, AdamConfig cfg) : cfg_(cfg) {
  for (const Matrix* p : params.tensors) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

double Adam::step(const ParamSet& params, const ParamSet& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ValidationError("optimizer state does not match the parameter set");
  }
  check_finite(grads, "gradient");
  double sq = 0.0;
  for (const Matrix* g : grads.tensors) sq += g->squaredNorm();
  const double norm = std::sqrt(sq);
  const double clip = (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) ? cfg_.grad_clip / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    Matrix& p = *params.tensors[i];
    const Matrix g = clip * *grads.tensors[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseAbs2();
    if (cfg_.weight_decay > 0.0) p *= 1.0 - cfg_.lr * cfg_.weight_decay;
    p.array() -= cfg_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
  return norm;
}

std::vector<double> target_logprobs(const ForwardCache& cache, std::size_t start) {
  if (start == 0) throw ValidationError("the first token has no prediction");
  std::vector<double> out;
  for (std::size_t t = start; t < cache.tokens.size(); ++t) {
    const auto row = cache.logits.row(static_cast<Eigen::Index>(t - 1));
    out.push_back(row(cache.tokens[t]) - logsumexp(row));
  }
  return out;
}

Matrix target_logprob_grad(const ForwardCache& cache, std::size_t start, std::span<const double> coeff) {
  Matrix d = Matrix::Zero(cache.logits.rows(), cache.logits.cols());
  for (std::size_t i = 0; i < coeff.size(); ++i) {
    const std::size_t t = start + i;
    const auto r = static_cast<Eigen::Index>(t - 1);
    const auto row = cache.logits.row(r);
    const double lse = logsumexp(row);
    d.row(r) = -coeff[i] * (row.array() - lse).exp();
    d(r, cache.tokens[t]) += coeff[i];
  }
  return d;
}

std::vector<int> concat(std::span<const int> a, std::span<const int> b) {
  std::vector<int> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

double sequence_logprob(const Weights& w, std::span<const int> prompt, std::span<const int> completion) {
  if (completion.empty()) return 0.0;
  if (prompt.empty()) throw ValidationError("sequence_logprob needs a nonempty prompt");
  ForwardCache cache;
  forward(w, concat(prompt, completion), cache);
  const auto lp = target_logprobs(cache, prompt.size());
  return std::accumulate(lp.begin(), lp.end(), 0.0);
}

double sequence_logprob_grad(const Weights& w, std::span<const int> prompt, std::span<const int> completion,
                             double scale, Weights& grads) {
  if (completion.empty()) return 0.0;
  if (prompt.empty()) throw ValidationError("sequence_logprob needs a nonempty prompt");
  ForwardCache cache;
  forward(w, concat(prompt, completion), cache);
  const auto lp = target_logprobs(cache, prompt.size());
  const std::vector<double> coeff(lp.size(), scale);
  backward(w, cache, target_logprob_grad(cache, prompt.size(), coeff), Matrix(), grads);
  return std::accumulate(lp.begin(), lp.end(), 0.0);
}

SftExample make_sft_example(const Tokenizer& tok, const PromptRecord& record) {
  SftExample ex;
  ex.tokens.push_back(Tokenizer::kBos);
  const auto prefix = tok.encode(render_prompt_prefix(record.instruction));
  ex.tokens.insert(ex.tokens.end(), prefix.begin(), prefix.end());
  ex.response_start = ex.tokens.size();
  const auto response = tok.encode(record.response + "\n");
  ex.tokens.insert(ex.tokens.end(), response.begin(), response.end());
  ex.tokens.push_back(Tokenizer::kEos);
  return ex;
}

double sft_loss(const Weights& w, const SftExample& ex, Weights* grads, double scale) {
  if (ex.response_start == 0 || ex.response_start >= ex.tokens.size()) {
    throw ValidationError("SFT example has no response tokens");
  }
  ForwardCache cache;
  forward(w, ex.tokens, cache);
  const auto lp = target_logprobs(cache, ex.response_start);
  const double n = static_cast<double>(lp.size());
  const double loss = -std::accumulate(lp.begin(), lp.end(), 0.0) / n;
  if (grads != nullptr) {
    const std::vector<double> coeff(lp.size(), -scale / n);
    backward(w, cache, target_logprob_grad(cache, ex.response_start, coeff), Matrix(), *grads);
  }
  return loss;
}

std::string train_log_csv(std::span<const TrainLogRow> rows) {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss,lr\n";
  for (const auto& r : rows) out << r.step << ',' << r.loss << ',' << r.lr << '\n';
  return out.str();
}

Weights sft_train(Weights w, std::span<const SftExample> examples, const SftConfig& cfg,
                  std::vector<TrainLogRow>* log) {
  if (examples.empty()) throw ValidationError("SFT needs at least one example");
  if (cfg.batch_size <= 0 || cfg.epochs < 0) throw ValidationError("SFT batch size and epochs must be positive");
  Weights grads = Weights::zeros(w.config);
  const ParamSet params = params_of(w);
  const ParamSet grad_set = params_of(grads);
  Adam adam(params, cfg.adam);

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t end = std::min(order.size(), b + bs);
      const double scale = 1.0 / static_cast<double>(end - b);
      grads.set_zero();
      double loss = 0.0;
      for (std::size_t i = b; i < end; ++i) loss += scale * sft_loss(w, examples[order[i]], &grads, scale);
      if (!std::isfinite(loss)) {
        throw NumericalError("SFT diverged: non-finite loss at step " + std::to_string(adam.steps() + 1));
      }
      adam.step(params, grad_set);
      if (log != nullptr) log->push_back({adam.steps(), loss, cfg.adam.lr});
    }
  }
  check_finite(params, "SFT result");
  return w;
}

Checkpoint sft_train(const Checkpoint& base, std::span<const PromptRecord> prompts, const SftConfig& cfg,
                     std::vector<TrainLogRow>* log) {
  std::vector<SftExample> examples;
  examples.reserve(prompts.size());
  for (const auto& p : prompts) examples.push_back(make_sft_example(base.tokenizer, p));
  Checkpoint out;
  out.tokenizer = base.tokenizer;
  out.weights = sft_train(base.weights, examples, cfg, log);
  out.role = Role::sft;
  return out;
}

double perplexity_from_cross_entropy(double mean_nll) { return std::exp(mean_nll); }

double perplexity(const Weights& w, std::span<const std::vector<int>> sequences) {
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& seq : sequences) {
    if (seq.size() < 2) continue;
    ForwardCache cache;
    forward(w, seq, cache);
    for (double lp : target_logprobs(cache, 1)) nll -= lp;
    count += seq.size() - 1;
  }
  if (count == 0) throw ValidationError("perplexity needs at least one predicted token");
  return perplexity_from_cross_entropy(nll / static_cast<double>(count));
}

double perplexity(const Weights& w, std::span<const SftExample> examples) {
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& ex : examples) {
    ForwardCache cache;
    forward(w, ex.tokens, cache);
    for (double lp : target_logprobs(cache, ex.response_start)) nll -= lp;
    count += ex.tokens.size() - ex.response_start;
  }
  if (count == 0) throw ValidationError("perplexity needs at least one predicted token");
  return perplexity_from_cross_entropy(nll / static_cast<double>(count));
}

}  // namespace perfalign

#pragma once

// Pre-LayerNorm GPT block stack over double-precision Eigen matrices with a
// handwritten reverse pass. Activations are row-per-position (T x C).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "perfalign/model/tensor_math.hpp"

namespace perfalign {

class Rng;

struct ModelConfig {
  int layers = 4;
  int heads = 4;
  int width = 128;
  int context = 512;
  int vocab = 0;

  int head_dim() const { return width / heads; }
  /// Throws ValidationError on nonpositive sizes or width % heads != 0.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerWeights {
  Matrix ln1_gain, ln1_bias;  // 1 x C
  Matrix w_qkv, b_qkv;        // C x 3C, 1 x 3C
  Matrix w_out, b_out;        // C x C, 1 x C
  Matrix ln2_gain, ln2_bias;
  Matrix w_fc, b_fc;      // C x 4C, 1 x 4C
  Matrix w_proj, b_proj;  // 4C x C, 1 x C
};

struct Weights {
  ModelConfig config;
  Matrix token_embedding;     // V x C
  Matrix position_embedding;  // context x C
  std::vector<LayerWeights> layers;
  Matrix lnf_gain, lnf_bias;
  Matrix lm_head;  // C x V

  /// All tensors zero (gains included); the shape template for gradients.
  static Weights zeros(const ModelConfig& config);
  /// GPT-2 style init. With zero_head the output projection starts at zero,
  /// making the initial next-token distribution exactly uniform.
  static Weights init(const ModelConfig& config, Rng& rng, bool zero_head = false);

  /// Visits every tensor as (name, matrix) in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const;
  void set_zero();
  /// this += scale * other
  void axpy(Scalar scale, const Weights& other);
  bool operator==(const Weights& other) const;

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f("token_embedding", self.token_embedding);
    f("position_embedding", self.position_embedding);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      auto& w = self.layers[l];
      f(p + "ln1_gain", w.ln1_gain);
      f(p + "ln1_bias", w.ln1_bias);
      f(p + "w_qkv", w.w_qkv);
      f(p + "b_qkv", w.b_qkv);
      f(p + "w_out", w.w_out);
      f(p + "b_out", w.b_out);
      f(p + "ln2_gain", w.ln2_gain);
      f(p + "ln2_bias", w.ln2_bias);
      f(p + "w_fc", w.w_fc);
      f(p + "b_fc", w.b_fc);
      f(p + "w_proj", w.w_proj);
      f(p + "b_proj", w.b_proj);
    }
    f("lnf_gain", self.lnf_gain);
    f("lnf_bias", self.lnf_bias);
    f("lm_head", self.lm_head);
  }
};

/// A scalar readout (value or reward) over the final hidden state.
struct ScalarHead {
  Matrix weight;  // C x 1
  Matrix bias;    // 1 x 1

  static ScalarHead zeros(int width);
  static ScalarHead init(int width, Rng& rng, double stddev = 0.0);

  Scalar apply(const Matrix& hidden, Eigen::Index row) const {
    return hidden.row(row).dot(weight.col(0)) + bias(0, 0);
  }

  template <typename F>
  void for_each(F&& f, const std::string& prefix) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

struct LayerCache {
  Matrix input;
  Matrix ln1, ln1_xhat;
  Vector ln1_rstd;
  Matrix qkv;
  std::vector<Matrix> attention;  // per head, T x T (causal, row-stochastic)
  Matrix attended;                // T x C, heads concatenated before w_out
  Matrix mid;
  Matrix ln2, ln2_xhat;
  Vector ln2_rstd;
  Matrix fc_pre, fc_act;
};

struct ForwardCache {
  std::vector<int> tokens;
  std::vector<LayerCache> layers;
  Matrix final_input;  // residual stream before the final norm
  Matrix lnf_xhat;
  Vector lnf_rstd;
  Matrix hidden;  // T x C, after the final norm
  Matrix logits;  // T x V; row t scores token t+1
};

/// Full causal forward pass. Throws LengthError past the context length and
/// ValidationError on out-of-range token ids.
void forward(const Weights& w, std::span<const int> tokens, ForwardCache& cache);

/// Accumulates parameter gradients into `grads`. Either upstream gradient may
/// be empty (0 x 0) when that output does not feed the loss.
void backward(const Weights& w, const ForwardCache& cache, const Matrix& d_logits, const Matrix& d_hidden,
              Weights& grads);

/// Convenience: logits only.
Matrix logits(const Weights& w, std::span<const int> tokens);

/// Incremental decoding with cached keys and values; matches forward() row by row.
class DecodeState {
 public:
  explicit DecodeState(const Weights& w);

  /// Feeds one token and returns the scores for the next one.
  RowVector push(int token);
  int length() const { return length_; }

 private:
  const Weights* w_;
  std::vector<Matrix> keys_;
  std::vector<Matrix> values_;
  int length_ = 0;
};

}  // namespace perfalign

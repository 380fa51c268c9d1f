#include "perfalign/model/transformer.hpp"

#include <cmath>
#include <numbers>

#include "perfalign/error.hpp"
#include "perfalign/rng.hpp"

namespace perfalign {

namespace {

constexpr Scalar kLayerNormEps = 1e-5;
const Scalar kGeluScale = std::sqrt(2.0 / std::numbers::pi);
constexpr Scalar kGeluCubic = 0.044715;

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, Scalar stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

void layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, Matrix& y, Matrix& xhat, Vector& rstd) {
  const auto c = static_cast<Scalar>(x.cols());
  xhat.resize(x.rows(), x.cols());
  rstd.resize(x.rows());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const Scalar mean = x.row(t).sum() / c;
    const Scalar var = (x.row(t).array() - mean).square().sum() / c;
    rstd(t) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(t) = (x.row(t).array() - mean) * rstd(t);
  }
  y = (xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const Vector& rstd, const Matrix& gain,
                           Matrix& d_gain, Matrix& d_bias) {
  d_gain.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  d_bias.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
  const auto c = static_cast<Scalar>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index t = 0; t < dy.rows(); ++t) {
    const Scalar mean_d = dxhat.row(t).sum() / c;
    const Scalar mean_dx = dxhat.row(t).dot(xhat.row(t)) / c;
    dx.row(t) = rstd(t) * (dxhat.row(t).array() - mean_d - xhat.row(t).array() * mean_dx);
  }
  return dx;
}

Scalar gelu(Scalar x) {
  const Scalar inner = kGeluScale * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(inner));
}

Scalar gelu_grad(Scalar x) {
  const Scalar inner = kGeluScale * (x + kGeluCubic * x * x * x);
  const Scalar th = std::tanh(inner);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
}

void add_bias(Matrix& m, const Matrix& bias) { m.rowwise() += bias.row(0); }

void check_tokens(const Weights& w, std::span<const int> tokens) {
  if (tokens.empty()) throw ValidationError("empty token sequence");
  if (static_cast<int>(tokens.size()) > w.config.context) {
    throw LengthError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds context length " +
                      std::to_string(w.config.context));
  }
  for (int t : tokens) {
    if (t < 0 || t >= w.config.vocab) throw ValidationError("token id " + std::to_string(t) + " out of range");
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (layers <= 0 || heads <= 0 || width <= 0 || context <= 0 || vocab <= 0) {
    throw ValidationError("model dimensions must be positive");
  }
  if (width % heads != 0) throw ValidationError("width must be divisible by heads");
}

Weights Weights::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const int c = cfg.width;
  Weights w;
  w.config = cfg;
  w.token_embedding = Matrix::Zero(cfg.vocab, c);
  w.position_embedding = Matrix::Zero(cfg.context, c);
  w.layers.resize(static_cast<std::size_t>(cfg.layers));
  for (auto& l : w.layers) {
    l.ln1_gain = Matrix::Zero(1, c);
    l.ln1_bias = Matrix::Zero(1, c);
    l.w_qkv = Matrix::Zero(c, 3 * c);
    l.b_qkv = Matrix::Zero(1, 3 * c);
    l.w_out = Matrix::Zero(c, c);
    l.b_out = Matrix::Zero(1, c);
    l.ln2_gain = Matrix::Zero(1, c);
    l.ln2_bias = Matrix::Zero(1, c);
    l.w_fc = Matrix::Zero(c, 4 * c);
    l.b_fc = Matrix::Zero(1, 4 * c);
    l.w_proj = Matrix::Zero(4 * c, c);
    l.b_proj = Matrix::Zero(1, c);
  }
  w.lnf_gain = Matrix::Zero(1, c);
  w.lnf_bias = Matrix::Zero(1, c);
  w.lm_head = Matrix::Zero(c, cfg.vocab);
  return w;
}

Weights Weights::init(const ModelConfig& cfg, Rng& rng, bool zero_head) {
  Weights w = zeros(cfg);
  const int c = cfg.width;
  const Scalar residual_std = 0.02 / std::sqrt(2.0 * cfg.layers);
  w.token_embedding = normal_matrix(cfg.vocab, c, 0.02, rng);
  w.position_embedding = normal_matrix(cfg.context, c, 0.01, rng);
  for (auto& l : w.layers) {
    l.ln1_gain.setOnes();
    l.ln2_gain.setOnes();
    l.w_qkv = normal_matrix(c, 3 * c, 0.02, rng);
    l.w_out = normal_matrix(c, c, residual_std, rng);
    l.w_fc = normal_matrix(c, 4 * c, 0.02, rng);
    l.w_proj = normal_matrix(4 * c, c, residual_std, rng);
  }
  w.lnf_gain.setOnes();
  if (!zero_head) w.lm_head = normal_matrix(c, cfg.vocab, 0.02, rng);
  return w;
}

std::size_t Weights::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

void Weights::set_zero() {
  for_each([](const std::string&, Matrix& m) { m.setZero(); });
}

void Weights::axpy(Scalar scale, const Weights& other) {
  std::vector<const Matrix*> src;
  other.for_each([&](const std::string&, const Matrix& m) { src.push_back(&m); });
  std::size_t i = 0;
  for_each([&](const std::string&, Matrix& m) { m += scale * *src[i++]; });
}

bool Weights::operator==(const Weights& other) const {
  if (!(config == other.config)) return false;
  std::vector<const Matrix*> rhs;
  other.for_each([&](const std::string&, const Matrix& m) { rhs.push_back(&m); });
  bool same = true;
  std::size_t i = 0;
  for_each([&](const std::string&, const Matrix& m) {
    const Matrix& o = *rhs[i++];
    same = same && m.rows() == o.rows() && m.cols() == o.cols() && m == o;
  });
  return same;
}

ScalarHead ScalarHead::zeros(int width) { return {Matrix::Zero(width, 1), Matrix::Zero(1, 1)}; }

ScalarHead ScalarHead::init(int width, Rng& rng, double stddev) {
  ScalarHead h = zeros(width);
  if (stddev > 0.0) h.weight = normal_matrix(width, 1, stddev, rng);
  return h;
}

void forward(const Weights& w, std::span<const int> tokens, ForwardCache& cache) {
  check_tokens(w, tokens);
  const auto t_len = static_cast<Eigen::Index>(tokens.size());
  const int c = w.config.width;
  const int hd = w.config.head_dim();
  const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(hd));

  cache.tokens.assign(tokens.begin(), tokens.end());
  cache.layers.resize(w.layers.size());

  Matrix x(t_len, c);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    x.row(t) = w.token_embedding.row(tokens[static_cast<std::size_t>(t)]) + w.position_embedding.row(t);
  }

  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const LayerWeights& lw = w.layers[l];
    LayerCache& lc = cache.layers[l];
    lc.input = x;
    layer_norm(x, lw.ln1_gain, lw.ln1_bias, lc.ln1, lc.ln1_xhat, lc.ln1_rstd);
    lc.qkv = lc.ln1 * lw.w_qkv;
    add_bias(lc.qkv, lw.b_qkv);

    lc.attended.resize(t_len, c);
    lc.attention.resize(static_cast<std::size_t>(w.config.heads));
    for (int h = 0; h < w.config.heads; ++h) {
      const auto q = lc.qkv.middleCols(h * hd, hd);
      const auto k = lc.qkv.middleCols(c + h * hd, hd);
      const auto v = lc.qkv.middleCols(2 * c + h * hd, hd);
      Matrix& p = lc.attention[static_cast<std::size_t>(h)];
      p = Matrix::Zero(t_len, t_len);
      for (Eigen::Index i = 0; i < t_len; ++i) {
        RowVector s = (k.topRows(i + 1) * q.row(i).transpose()).transpose() * scale;
        const Scalar m = s.maxCoeff();
        s = (s.array() - m).exp();
        p.row(i).head(i + 1) = s / s.sum();
      }
      lc.attended.middleCols(h * hd, hd) = p * v;
    }
    lc.mid = lc.attended * lw.w_out;
    add_bias(lc.mid, lw.b_out);
    lc.mid += x;

    layer_norm(lc.mid, lw.ln2_gain, lw.ln2_bias, lc.ln2, lc.ln2_xhat, lc.ln2_rstd);
    lc.fc_pre = lc.ln2 * lw.w_fc;
    add_bias(lc.fc_pre, lw.b_fc);
    lc.fc_act = lc.fc_pre.unaryExpr([](Scalar v) { return gelu(v); });
    x = lc.fc_act * lw.w_proj;
    add_bias(x, lw.b_proj);
    x += lc.mid;
  }

  cache.final_input = x;
  layer_norm(x, w.lnf_gain, w.lnf_bias, cache.hidden, cache.lnf_xhat, cache.lnf_rstd);
  cache.logits = cache.hidden * w.lm_head;
}

void backward(const Weights& w, const ForwardCache& cache, const Matrix& d_logits, const Matrix& d_hidden,
              Weights& g) {
  const auto t_len = static_cast<Eigen::Index>(cache.tokens.size());
  const int c = w.config.width;
  const int hd = w.config.head_dim();
  const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(hd));

  Matrix dh = d_hidden.size() > 0 ? d_hidden : Matrix(Matrix::Zero(t_len, c));
  if (d_logits.size() > 0) {
    g.lm_head.noalias() += cache.hidden.transpose() * d_logits;
    dh.noalias() += d_logits * w.lm_head.transpose();
  }
  Matrix dx = layer_norm_backward(dh, cache.lnf_xhat, cache.lnf_rstd, w.lnf_gain, g.lnf_gain, g.lnf_bias);

  for (std::size_t li = w.layers.size(); li-- > 0;) {
    const LayerWeights& lw = w.layers[li];
    const LayerCache& lc = cache.layers[li];
    LayerWeights& lg = g.layers[li];

    // x_out = mid + gelu(ln2(mid) W_fc + b_fc) W_proj + b_proj
    Matrix d_mid = dx;
    lg.w_proj.noalias() += lc.fc_act.transpose() * dx;
    lg.b_proj.row(0) += dx.colwise().sum();
    Matrix d_fc = dx * lw.w_proj.transpose();
    d_fc.array() *= lc.fc_pre.unaryExpr([](Scalar v) { return gelu_grad(v); }).array();
    lg.w_fc.noalias() += lc.ln2.transpose() * d_fc;
    lg.b_fc.row(0) += d_fc.colwise().sum();
    const Matrix d_ln2 = d_fc * lw.w_fc.transpose();
    d_mid += layer_norm_backward(d_ln2, lc.ln2_xhat, lc.ln2_rstd, lw.ln2_gain, lg.ln2_gain, lg.ln2_bias);

    // mid = input + attn(ln1(input)) W_out + b_out
    Matrix d_input = d_mid;
    lg.w_out.noalias() += lc.attended.transpose() * d_mid;
    lg.b_out.row(0) += d_mid.colwise().sum();
    const Matrix d_att = d_mid * lw.w_out.transpose();

    Matrix d_qkv = Matrix::Zero(t_len, 3 * c);
    for (int h = 0; h < w.config.heads; ++h) {
      const Matrix& p = lc.attention[static_cast<std::size_t>(h)];
      const auto q = lc.qkv.middleCols(h * hd, hd);
      const auto k = lc.qkv.middleCols(c + h * hd, hd);
      const auto v = lc.qkv.middleCols(2 * c + h * hd, hd);
      const auto d_out = d_att.middleCols(h * hd, hd);
      const Matrix d_p = d_out * v.transpose();
      d_qkv.middleCols(2 * c + h * hd, hd).noalias() += p.transpose() * d_out;
      const Vector row_dot = (d_p.array() * p.array()).rowwise().sum();
      const Matrix d_s = p.array() * (d_p.array().colwise() - row_dot.array());
      d_qkv.middleCols(h * hd, hd).noalias() += scale * (d_s * k);
      d_qkv.middleCols(c + h * hd, hd).noalias() += scale * (d_s.transpose() * q);
    }
    lg.w_qkv.noalias() += lc.ln1.transpose() * d_qkv;
    lg.b_qkv.row(0) += d_qkv.colwise().sum();
    const Matrix d_ln1 = d_qkv * lw.w_qkv.transpose();
    d_input += layer_norm_backward(d_ln1, lc.ln1_xhat, lc.ln1_rstd, lw.ln1_gain, lg.ln1_gain, lg.ln1_bias);
    dx = std::move(d_input);
  }

  for (Eigen::Index t = 0; t < t_len; ++t) {
    g.token_embedding.row(cache.tokens[static_cast<std::size_t>(t)]) += dx.row(t);
    g.position_embedding.row(t) += dx.row(t);
  }
}

Matrix logits(const Weights& w, std::span<const int> tokens) {
  ForwardCache cache;
  forward(w, tokens, cache);
  return std::move(cache.logits);
}

DecodeState::DecodeState(const Weights& w) : w_(&w) {
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    keys_.emplace_back(w.config.context, w.config.width);
    values_.emplace_back(w.config.context, w.config.width);
  }
}

RowVector DecodeState::push(int token) {
  const Weights& w = *w_;
  const int pos = length_;
  if (pos >= w.config.context) throw LengthError("decode position exceeds context length");
  if (token < 0 || token >= w.config.vocab) throw ValidationError("token id out of range");
  const int c = w.config.width;
  const int hd = w.config.head_dim();
  const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(hd));

  Matrix x = w.token_embedding.row(token) + w.position_embedding.row(pos);
  Matrix ln, xhat;
  Vector rstd;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const LayerWeights& lw = w.layers[l];
    layer_norm(x, lw.ln1_gain, lw.ln1_bias, ln, xhat, rstd);
    Matrix qkv = ln * lw.w_qkv;
    add_bias(qkv, lw.b_qkv);
    keys_[l].row(pos) = qkv.middleCols(c, c);
    values_[l].row(pos) = qkv.middleCols(2 * c, c);

    Matrix attended(1, c);
    for (int h = 0; h < w.config.heads; ++h) {
      const auto k = keys_[l].block(0, h * hd, pos + 1, hd);
      const auto v = values_[l].block(0, h * hd, pos + 1, hd);
      RowVector s = (k * qkv.block(0, h * hd, 1, hd).transpose()).transpose() * scale;
      const Scalar m = s.maxCoeff();
      s = (s.array() - m).exp();
      s /= s.sum();
      attended.middleCols(h * hd, hd) = s * v;
    }
    Matrix mid = attended * lw.w_out;
    add_bias(mid, lw.b_out);
    mid += x;
    layer_norm(mid, lw.ln2_gain, lw.ln2_bias, ln, xhat, rstd);
    Matrix fc = ln * lw.w_fc;
    add_bias(fc, lw.b_fc);
    fc = fc.unaryExpr([](Scalar v) { return gelu(v); });
    x = fc * lw.w_proj;
    add_bias(x, lw.b_proj);
    x += mid;
  }
  layer_norm(x, w.lnf_gain, w.lnf_bias, ln, xhat, rstd);
  ++length_;
  return ln * w.lm_head;
}

}  // namespace perfalign

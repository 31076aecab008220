#include "s3lg/transformer.h"

#include <cmath>
#include <limits>

namespace s3lg {

void TransformerConfig::validate() const {
  if (layers <= 0 || embed_dim <= 0 || ffn_dim <= 0 || heads <= 0 || max_len <= 1) {
    throw ConfigError("transformer dimensions must be positive");
  }
  if (embed_dim % heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ConfigError("label_smoothing must lie in [0, 1)");
  }
}

nlohmann::json TransformerConfig::to_json() const {
  return {{"layers", layers},
          {"embed_dim", embed_dim},
          {"ffn_dim", ffn_dim},
          {"heads", heads},
          {"dropout_rate", dropout_rate},
          {"label_smoothing", label_smoothing},
          {"max_len", max_len}};
}

TransformerConfig TransformerConfig::from_json(const nlohmann::json& j) {
  TransformerConfig c;
  c.layers = j.value("layers", c.layers);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.heads = j.value("heads", c.heads);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.max_len = j.value("max_len", c.max_len);
  return c;
}

// ---------------------------------------------------------------------------
// TransformerParams

namespace {

template <typename T, typename P>
void push_linear(std::vector<P>& out, LinearParams<T>& p) {
  out.push_back(&p.weight);
  out.push_back(&p.bias);
}

template <typename T, typename P>
void push_norm(std::vector<P>& out, NormParams<T>& p) {
  out.push_back(&p.gain);
  out.push_back(&p.bias);
}

template <typename T, typename P>
void push_attention(std::vector<P>& out, AttentionParams<T>& p) {
  push_linear(out, p.query);
  push_linear(out, p.key);
  push_linear(out, p.value);
  push_linear(out, p.output);
}

template <typename T, typename P>
void push_ffn(std::vector<P>& out, FeedForwardParams<T>& p) {
  push_linear(out, p.inner);
  push_linear(out, p.outer);
}

}  // namespace

template <typename T>
std::vector<Matrix<T>*> TransformerParams<T>::tensors() {
  std::vector<Matrix<T>*> out;
  out.push_back(&src_embed);
  out.push_back(&tgt_embed);
  for (auto& layer : encoder) {
    push_norm(out, layer.attn_norm);
    push_attention(out, layer.self_attn);
    push_norm(out, layer.ffn_norm);
    push_ffn(out, layer.ffn);
  }
  push_norm(out, encoder_norm);
  for (auto& layer : decoder) {
    push_norm(out, layer.self_norm);
    push_attention(out, layer.self_attn);
    push_norm(out, layer.cross_norm);
    push_attention(out, layer.cross_attn);
    push_norm(out, layer.ffn_norm);
    push_ffn(out, layer.ffn);
  }
  push_norm(out, decoder_norm);
  push_linear(out, output);
  return out;
}

template <typename T>
std::vector<const Matrix<T>*> TransformerParams<T>::tensors() const {
  auto mutable_list = const_cast<TransformerParams*>(this)->tensors();
  return {mutable_list.begin(), mutable_list.end()};
}

template <typename T>
std::size_t TransformerParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* m : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

template <typename T>
TransformerParams<T> TransformerParams<T>::zeros_like() const {
  TransformerParams out = *this;
  out.set_zero();
  return out;
}

template <typename T>
void TransformerParams<T>::set_zero() {
  for (auto* m : tensors()) m->setZero();
}

template <typename T>
void TransformerParams<T>::add_scaled(const TransformerParams& other, T scale) {
  auto dst = tensors();
  auto src = other.tensors();
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] += scale * *src[i];
}

// ---------------------------------------------------------------------------
// Building blocks

namespace {

template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

constexpr double kNormEpsilon = 1e-5;

template <typename T>
Matrix<T> linear_forward(const LinearParams<T>& p, const Matrix<T>& x) {
  Matrix<T> y = x * p.weight;
  y.rowwise() += p.bias.row(0);
  return y;
}

template <typename T>
Matrix<T> linear_backward(const LinearParams<T>& p, LinearParams<T>& g, const Matrix<T>& x,
                          const Matrix<T>& dy) {
  g.weight.noalias() += x.transpose() * dy;
  g.bias += dy.colwise().sum();
  return dy * p.weight.transpose();
}

template <typename T>
Matrix<T> norm_forward(const NormParams<T>& p, const Matrix<T>& x, NormCache<T>* cache) {
  const auto d = static_cast<T>(x.cols());
  Eigen::Matrix<T, Eigen::Dynamic, 1> mean = x.rowwise().sum() / d;
  Matrix<T> centered = x.colwise() - mean;
  Eigen::Matrix<T, Eigen::Dynamic, 1> var = centered.array().square().rowwise().sum() / d;
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std = (var.array() + T(kNormEpsilon)).rsqrt();
  Matrix<T> normalized = centered.array().colwise() * inv_std.array();
  Matrix<T> y = normalized.array().rowwise() * p.gain.row(0).array();
  y.rowwise() += p.bias.row(0);
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
Matrix<T> norm_backward(const NormParams<T>& p, NormParams<T>& g, const NormCache<T>& cache,
                        const Matrix<T>& dy) {
  const auto d = static_cast<T>(dy.cols());
  g.gain += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  g.bias += dy.colwise().sum();
  Matrix<T> dnorm = dy.array().rowwise() * p.gain.row(0).array();
  Eigen::Matrix<T, Eigen::Dynamic, 1> mean_d = dnorm.rowwise().sum() / d;
  Eigen::Matrix<T, Eigen::Dynamic, 1> mean_dn = (dnorm.array() * cache.normalized.array()).rowwise().sum() / d;
  Matrix<T> dx = dnorm.colwise() - mean_d;
  dx -= (cache.normalized.array().colwise() * mean_dn.array()).matrix();
  dx = dx.array().colwise() * cache.inv_std.array();
  return dx;
}

template <typename T>
Matrix<T> apply_dropout(const Matrix<T>& x, DropoutSampler* dropout, Matrix<T>* mask_out) {
  if (!dropout || dropout->rate() == 0.0) {
    if (mask_out) mask_out->resize(0, 0);
    return x;
  }
  Matrix<T> mask = dropout->mask<T>(x.rows(), x.cols());
  Matrix<T> y = x.cwiseProduct(mask);
  if (mask_out) *mask_out = std::move(mask);
  return y;
}

template <typename T>
Matrix<T> dropout_backward(const Matrix<T>& dy, const Matrix<T>& mask) {
  if (mask.size() == 0) return dy;
  return dy.cwiseProduct(mask);
}

template <typename T>
void softmax_rows_inplace(Matrix<T>& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    auto row = s.row(i);
    const T max = row.maxCoeff();
    row = (row.array() - max).exp();
    row /= row.sum();
  }
}

// Multi-head attention of `query_in` over `kv_in`.
template <typename T>
Matrix<T> attention_forward(const AttentionParams<T>& p, const Matrix<T>& query_in, const Matrix<T>& kv_in,
                            int heads, bool causal, AttentionCache<T>* cache) {
  const Eigen::Index d = p.query.weight.cols();
  const Eigen::Index dk = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dk));
  Matrix<T> q = linear_forward(p.query, query_in);
  Matrix<T> k = linear_forward(p.key, kv_in);
  Matrix<T> v = linear_forward(p.value, kv_in);
  Matrix<T> context(query_in.rows(), d);
  std::vector<Matrix<T>> probs;
  if (cache) probs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index off = h * dk;
    Matrix<T> scores = (q.middleCols(off, dk) * k.middleCols(off, dk).transpose()) * scale;
    if (causal) {
      for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < scores.cols(); ++j) {
          scores(i, j) = -std::numeric_limits<T>::infinity();
        }
      }
    }
    softmax_rows_inplace(scores);
    context.middleCols(off, dk).noalias() = scores * v.middleCols(off, dk);
    if (cache) probs.push_back(std::move(scores));
  }
  Matrix<T> out = linear_forward(p.output, context);
  if (cache) {
    cache->query_in = query_in;
    cache->kv_in = kv_in;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
  }
  return out;
}

// Returns (d query_in, d kv_in).
template <typename T>
std::pair<Matrix<T>, Matrix<T>> attention_backward(const AttentionParams<T>& p, AttentionParams<T>& g,
                                                   const AttentionCache<T>& c, const Matrix<T>& dout,
                                                   int heads) {
  const Eigen::Index d = p.query.weight.cols();
  const Eigen::Index dk = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dk));
  Matrix<T> dcontext = linear_backward(p.output, g.output, c.context, dout);
  Matrix<T> dq = Matrix<T>::Zero(c.q.rows(), d);
  Matrix<T> dk_all = Matrix<T>::Zero(c.k.rows(), d);
  Matrix<T> dv = Matrix<T>::Zero(c.v.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index off = h * dk;
    const Matrix<T>& prob = c.probs[static_cast<std::size_t>(h)];
    Matrix<T> dctx = dcontext.middleCols(off, dk);
    Matrix<T> dprob = dctx * c.v.middleCols(off, dk).transpose();
    dv.middleCols(off, dk).noalias() += prob.transpose() * dctx;
    Eigen::Matrix<T, Eigen::Dynamic, 1> row_dot = (dprob.array() * prob.array()).rowwise().sum();
    Matrix<T> dscores = prob.array() * (dprob.colwise() - row_dot).array();
    dscores *= scale;
    dq.middleCols(off, dk).noalias() += dscores * c.k.middleCols(off, dk);
    dk_all.middleCols(off, dk).noalias() += dscores.transpose() * c.q.middleCols(off, dk);
  }
  Matrix<T> dquery_in = linear_backward(p.query, g.query, c.query_in, dq);
  Matrix<T> dkv_in = linear_backward(p.key, g.key, c.kv_in, dk_all);
  dkv_in += linear_backward(p.value, g.value, c.kv_in, dv);
  return {std::move(dquery_in), std::move(dkv_in)};
}

template <typename T>
Matrix<T> ffn_forward(const FeedForwardParams<T>& p, const Matrix<T>& x, DropoutSampler* dropout,
                      FeedForwardCache<T>* cache) {
  Matrix<T> pre = linear_forward(p.inner, x);
  Matrix<T> hidden = pre.cwiseMax(T(0));
  Matrix<T> mask;
  hidden = apply_dropout(hidden, dropout, &mask);
  Matrix<T> out = linear_forward(p.outer, hidden);
  if (cache) {
    cache->input = x;
    cache->pre_activation = std::move(pre);
    cache->hidden = std::move(hidden);
    cache->dropout_mask = std::move(mask);
  }
  return out;
}

template <typename T>
Matrix<T> ffn_backward(const FeedForwardParams<T>& p, FeedForwardParams<T>& g, const FeedForwardCache<T>& c,
                       const Matrix<T>& dout) {
  Matrix<T> dhidden = linear_backward(p.outer, g.outer, c.hidden, dout);
  dhidden = dropout_backward(dhidden, c.dropout_mask);
  Matrix<T> dpre = (c.pre_activation.array() > T(0)).select(dhidden, T(0));
  return linear_backward(p.inner, g.inner, c.input, dpre);
}

template <typename T>
Matrix<T> sinusoidal_positions(int max_len, int d) {
  Matrix<T> pe(max_len, d);
  for (int pos = 0; pos < max_len; ++pos) {
    for (int i = 0; i < d; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / d);
      pe(pos, i) = static_cast<T>(std::sin(angle));
      if (i + 1 < d) pe(pos, i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
Matrix<T> embed(const Matrix<T>& table, const Matrix<T>& positions, std::span<const int> ids, int offset) {
  const auto d = table.cols();
  const T scale = std::sqrt(static_cast<T>(d));
  Matrix<T> x(static_cast<Eigen::Index>(ids.size()), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x.row(r) = table.row(ids[i]) * scale + positions.row(offset + r);
  }
  return x;
}

template <typename T>
void embed_backward(Matrix<T>& grad_table, std::span<const int> ids, const Matrix<T>& dx) {
  const T scale = std::sqrt(static_cast<T>(grad_table.cols()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    grad_table.row(ids[i]) += dx.row(static_cast<Eigen::Index>(i)) * scale;
  }
}

template <typename T>
void init_linear(LinearParams<T>& p, int in, int out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  p.weight.resize(in, out);
  for (Eigen::Index i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = static_cast<T>(dist(rng));
  p.bias = Matrix<T>::Zero(1, out);
}

template <typename T>
void init_norm(NormParams<T>& p, int d) {
  p.gain = Matrix<T>::Ones(1, d);
  p.bias = Matrix<T>::Zero(1, d);
}

template <typename T>
void init_attention(AttentionParams<T>& p, int d, std::mt19937_64& rng) {
  init_linear(p.query, d, d, rng);
  init_linear(p.key, d, d, rng);
  init_linear(p.value, d, d, rng);
  init_linear(p.output, d, d, rng);
}

template <typename T>
void init_embedding(Matrix<T>& table, std::size_t rows, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  table.resize(static_cast<Eigen::Index>(rows), d);
  for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = static_cast<T>(dist(rng));
}

template <typename T>
void check_ids(std::span<const int> ids, std::size_t vocab, const char* what) {
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range(std::string(what) + " id " + std::to_string(id) + " outside vocabulary");
    }
  }
}

}  // namespace

template <typename T>
Matrix<T> log_softmax_rows(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const T max = logits.row(i).maxCoeff();
    const T lse = max + std::log((logits.row(i).array() - max).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transformer

template <typename T>
Transformer<T>::Transformer(const TransformerConfig& config, std::size_t src_vocab, std::size_t tgt_vocab)
    : config_(config), src_vocab_(src_vocab), tgt_vocab_(tgt_vocab) {
  config_.validate();
  if (src_vocab == 0 || tgt_vocab == 0) throw ConfigError("vocabularies must be non-empty");
  positions_ = sinusoidal_positions<T>(config_.max_len, config_.embed_dim);
  initialize(0);
}

template <typename T>
void Transformer<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int d = config_.embed_dim;
  const int f = config_.ffn_dim;
  auto& p = params_;
  init_embedding(p.src_embed, src_vocab_, d, rng);
  init_embedding(p.tgt_embed, tgt_vocab_, d, rng);
  p.encoder.assign(static_cast<std::size_t>(config_.layers), {});
  for (auto& layer : p.encoder) {
    init_norm(layer.attn_norm, d);
    init_attention(layer.self_attn, d, rng);
    init_norm(layer.ffn_norm, d);
    init_linear(layer.ffn.inner, d, f, rng);
    init_linear(layer.ffn.outer, f, d, rng);
  }
  init_norm(p.encoder_norm, d);
  p.decoder.assign(static_cast<std::size_t>(config_.layers), {});
  for (auto& layer : p.decoder) {
    init_norm(layer.self_norm, d);
    init_attention(layer.self_attn, d, rng);
    init_norm(layer.cross_norm, d);
    init_attention(layer.cross_attn, d, rng);
    init_norm(layer.ffn_norm, d);
    init_linear(layer.ffn.inner, d, f, rng);
    init_linear(layer.ffn.outer, f, d, rng);
  }
  init_norm(p.decoder_norm, d);
  init_linear(p.output, d, static_cast<int>(tgt_vocab_), rng);
}

template <typename T>
Matrix<T> Transformer<T>::forward(std::span<const int> src, std::span<const int> tgt_in, DropoutSampler* dropout,
                                  ForwardCache<T>* cache) const {
  if (src.empty() || tgt_in.empty()) throw std::invalid_argument("empty sequence passed to forward");
  if (src.size() > static_cast<std::size_t>(config_.max_len) ||
      tgt_in.size() > static_cast<std::size_t>(config_.max_len)) {
    throw std::length_error("sequence exceeds max_len " + std::to_string(config_.max_len));
  }
  check_ids<T>(src, src_vocab_, "source");
  check_ids<T>(tgt_in, tgt_vocab_, "target");
  const int heads = config_.heads;
  const auto& p = params_;
  if (cache) {
    cache->src.assign(src.begin(), src.end());
    cache->tgt_in.assign(tgt_in.begin(), tgt_in.end());
    cache->encoder.assign(p.encoder.size(), {});
    cache->decoder.assign(p.decoder.size(), {});
  }

  Matrix<T> x = apply_dropout(embed(p.src_embed, positions_, src, 0), dropout,
                              cache ? &cache->src_embed_mask : nullptr);
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    const auto& layer = p.encoder[l];
    EncoderLayerCache<T>* lc = cache ? &cache->encoder[l] : nullptr;
    Matrix<T> a_in = norm_forward(layer.attn_norm, x, lc ? &lc->attn_norm : nullptr);
    Matrix<T> a = attention_forward(layer.self_attn, a_in, a_in, heads, false, lc ? &lc->attn : nullptr);
    x += apply_dropout(a, dropout, lc ? &lc->attn_mask : nullptr);
    Matrix<T> f_in = norm_forward(layer.ffn_norm, x, lc ? &lc->ffn_norm : nullptr);
    Matrix<T> f = ffn_forward(layer.ffn, f_in, dropout, lc ? &lc->ffn : nullptr);
    x += apply_dropout(f, dropout, lc ? &lc->ffn_mask : nullptr);
  }
  Matrix<T> memory = norm_forward(p.encoder_norm, x, cache ? &cache->encoder_norm : nullptr);

  Matrix<T> y = apply_dropout(embed(p.tgt_embed, positions_, tgt_in, 0), dropout,
                              cache ? &cache->tgt_embed_mask : nullptr);
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const auto& layer = p.decoder[l];
    DecoderLayerCache<T>* lc = cache ? &cache->decoder[l] : nullptr;
    Matrix<T> s_in = norm_forward(layer.self_norm, y, lc ? &lc->self_norm : nullptr);
    Matrix<T> s = attention_forward(layer.self_attn, s_in, s_in, heads, true, lc ? &lc->self_attn : nullptr);
    y += apply_dropout(s, dropout, lc ? &lc->self_mask : nullptr);
    Matrix<T> c_in = norm_forward(layer.cross_norm, y, lc ? &lc->cross_norm : nullptr);
    Matrix<T> c = attention_forward(layer.cross_attn, c_in, memory, heads, false, lc ? &lc->cross_attn : nullptr);
    y += apply_dropout(c, dropout, lc ? &lc->cross_mask : nullptr);
    Matrix<T> f_in = norm_forward(layer.ffn_norm, y, lc ? &lc->ffn_norm : nullptr);
    Matrix<T> f = ffn_forward(layer.ffn, f_in, dropout, lc ? &lc->ffn : nullptr);
    y += apply_dropout(f, dropout, lc ? &lc->ffn_mask : nullptr);
  }
  Matrix<T> out = norm_forward(p.decoder_norm, y, cache ? &cache->decoder_norm : nullptr);
  Matrix<T> logits = linear_forward(p.output, out);
  if (cache) {
    cache->memory = std::move(memory);
    cache->decoder_out = std::move(out);
  }
  return logits;
}

template <typename T>
void Transformer<T>::backward(const ForwardCache<T>& cache, const Matrix<T>& dlogits,
                              TransformerParams<T>& grads) const {
  const int heads = config_.heads;
  const auto& p = params_;
  Matrix<T> dout = linear_backward(p.output, grads.output, cache.decoder_out, dlogits);
  Matrix<T> dy = norm_backward(p.decoder_norm, grads.decoder_norm, cache.decoder_norm, dout);
  Matrix<T> dmemory = Matrix<T>::Zero(cache.memory.rows(), cache.memory.cols());
  for (std::size_t l = p.decoder.size(); l-- > 0;) {
    const auto& layer = p.decoder[l];
    auto& gl = grads.decoder[l];
    const auto& lc = cache.decoder[l];
    Matrix<T> df = dropout_backward(dy, lc.ffn_mask);
    dy += norm_backward(layer.ffn_norm, gl.ffn_norm, lc.ffn_norm, ffn_backward(layer.ffn, gl.ffn, lc.ffn, df));
    Matrix<T> dc = dropout_backward(dy, lc.cross_mask);
    auto [dc_in, dmem] = attention_backward(layer.cross_attn, gl.cross_attn, lc.cross_attn, dc, heads);
    dmemory += dmem;
    dy += norm_backward(layer.cross_norm, gl.cross_norm, lc.cross_norm, dc_in);
    Matrix<T> ds = dropout_backward(dy, lc.self_mask);
    auto [ds_q, ds_kv] = attention_backward(layer.self_attn, gl.self_attn, lc.self_attn, ds, heads);
    ds_q += ds_kv;
    dy += norm_backward(layer.self_norm, gl.self_norm, lc.self_norm, ds_q);
  }
  embed_backward(grads.tgt_embed, cache.tgt_in, dropout_backward(dy, cache.tgt_embed_mask));

  Matrix<T> dx = norm_backward(p.encoder_norm, grads.encoder_norm, cache.encoder_norm, dmemory);
  for (std::size_t l = p.encoder.size(); l-- > 0;) {
    const auto& layer = p.encoder[l];
    auto& gl = grads.encoder[l];
    const auto& lc = cache.encoder[l];
    Matrix<T> df = dropout_backward(dx, lc.ffn_mask);
    dx += norm_backward(layer.ffn_norm, gl.ffn_norm, lc.ffn_norm, ffn_backward(layer.ffn, gl.ffn, lc.ffn, df));
    Matrix<T> da = dropout_backward(dx, lc.attn_mask);
    auto [da_q, da_kv] = attention_backward(layer.self_attn, gl.self_attn, lc.attn, da, heads);
    da_q += da_kv;
    dx += norm_backward(layer.attn_norm, gl.attn_norm, lc.attn_norm, da_q);
  }
  embed_backward(grads.src_embed, cache.src, dropout_backward(dx, cache.src_embed_mask));
}

template <typename T>
Matrix<T> Transformer<T>::encode(std::span<const int> src) const {
  if (src.empty()) throw std::invalid_argument("empty source sequence");
  if (src.size() > static_cast<std::size_t>(config_.max_len)) {
    throw std::length_error("sequence exceeds max_len " + std::to_string(config_.max_len));
  }
  check_ids<T>(src, src_vocab_, "source");
  const auto& p = params_;
  Matrix<T> x = embed(p.src_embed, positions_, src, 0);
  for (const auto& layer : p.encoder) {
    Matrix<T> a_in = norm_forward<T>(layer.attn_norm, x, nullptr);
    x += attention_forward<T>(layer.self_attn, a_in, a_in, config_.heads, false, nullptr);
    x += ffn_forward<T>(layer.ffn, norm_forward<T>(layer.ffn_norm, x, nullptr), nullptr, nullptr);
  }
  return norm_forward<T>(p.encoder_norm, x, nullptr);
}

template <typename T>
DecoderState<T> Transformer<T>::start_decoding(const Matrix<T>& memory) const {
  DecoderState<T> state;
  for (const auto& layer : params_.decoder) {
    state.cross_keys.push_back(linear_forward(layer.cross_attn.key, memory));
    state.cross_values.push_back(linear_forward(layer.cross_attn.value, memory));
    state.self_keys.emplace_back(0, config_.embed_dim);
    state.self_values.emplace_back(0, config_.embed_dim);
  }
  return state;
}

namespace {

// One query row attending over precomputed keys/values.
template <typename T>
Matrix<T> attend_row(const AttentionParams<T>& p, const Matrix<T>& query_in, const Matrix<T>& keys,
                     const Matrix<T>& values, int heads) {
  const Eigen::Index d = p.query.weight.cols();
  const Eigen::Index dk = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dk));
  Matrix<T> q = linear_forward(p.query, query_in);
  Matrix<T> context(1, d);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index off = h * dk;
    Matrix<T> scores = (q.middleCols(off, dk) * keys.middleCols(off, dk).transpose()) * scale;
    softmax_rows_inplace(scores);
    context.middleCols(off, dk).noalias() = scores * values.middleCols(off, dk);
  }
  return linear_forward(p.output, context);
}

template <typename T>
void append_row(Matrix<T>& m, const Matrix<T>& row) {
  m.conservativeResize(m.rows() + 1, Eigen::NoChange);
  m.row(m.rows() - 1) = row.row(0);
}

}  // namespace

template <typename T>
Eigen::Matrix<T, 1, Eigen::Dynamic> Transformer<T>::step(DecoderState<T>& state, int token) const {
  if (state.position >= config_.max_len) throw std::length_error("decoder state exceeds max_len");
  const int ids[1] = {token};
  check_ids<T>(ids, tgt_vocab_, "target");
  const auto& p = params_;
  Matrix<T> y = embed(p.tgt_embed, positions_, std::span<const int>(ids, 1), state.position);
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const auto& layer = p.decoder[l];
    Matrix<T> s_in = norm_forward<T>(layer.self_norm, y, nullptr);
    append_row(state.self_keys[l], linear_forward(layer.self_attn.key, s_in));
    append_row(state.self_values[l], linear_forward(layer.self_attn.value, s_in));
    y += attend_row(layer.self_attn, s_in, state.self_keys[l], state.self_values[l], config_.heads);
    Matrix<T> c_in = norm_forward<T>(layer.cross_norm, y, nullptr);
    y += attend_row(layer.cross_attn, c_in, state.cross_keys[l], state.cross_values[l], config_.heads);
    y += ffn_forward<T>(layer.ffn, norm_forward<T>(layer.ffn_norm, y, nullptr), nullptr, nullptr);
  }
  ++state.position;
  Matrix<T> logits = linear_forward(p.output, norm_forward<T>(p.decoder_norm, y, nullptr));
  return log_softmax_rows(logits).row(0);
}

template struct TransformerParams<float>;
template struct TransformerParams<double>;
template class Transformer<float>;
template class Transformer<double>;
template Matrix<float> log_softmax_rows(const Matrix<float>&);
template Matrix<double> log_softmax_rows(const Matrix<double>&);

}  // namespace s3lg

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace s3lg {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TransformerConfig {
  int layers = 3;  // encoder and decoder depth
  int embed_dim = 512;
  int ffn_dim = 2048;
  int heads = 8;
  double dropout_rate = 0.3;
  double label_smoothing = 0.1;
  int max_len = 128;

  void validate() const;
  nlohmann::json to_json() const;
  static TransformerConfig from_json(const nlohmann::json& j);
  bool operator==(const TransformerConfig&) const = default;
};

// Produces inverted-dropout masks from a seeded stream. Two samplers built
// from the same seed yield identical masks for the same call sequence, which
// is what lets a stochastic pass be replayed exactly.
class DropoutSampler {
 public:
  DropoutSampler(std::uint64_t seed, double rate) : engine_(seed), rate_(rate) {}

  double rate() const { return rate_; }

  template <typename T>
  Matrix<T> mask(Eigen::Index rows, Eigen::Index cols) {
    Matrix<T> m(rows, cols);
    const T keep_scale = T(1) / T(1 - rate_);
    const auto threshold = static_cast<std::uint64_t>(rate_ * 18446744073709551616.0);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = engine_() < threshold ? T(0) : keep_scale;
    }
    return m;
  }

 private:
  std::mt19937_64 engine_;
  double rate_;
};

template <typename T>
struct LinearParams {
  Matrix<T> weight;  // in x out
  Matrix<T> bias;    // 1 x out
};

template <typename T>
struct NormParams {
  Matrix<T> gain;  // 1 x d
  Matrix<T> bias;  // 1 x d
};

template <typename T>
struct AttentionParams {
  LinearParams<T> query, key, value, output;
};

template <typename T>
struct FeedForwardParams {
  LinearParams<T> inner, outer;
};

template <typename T>
struct EncoderLayerParams {
  NormParams<T> attn_norm;
  AttentionParams<T> self_attn;
  NormParams<T> ffn_norm;
  FeedForwardParams<T> ffn;
};

template <typename T>
struct DecoderLayerParams {
  NormParams<T> self_norm;
  AttentionParams<T> self_attn;
  NormParams<T> cross_norm;
  AttentionParams<T> cross_attn;
  NormParams<T> ffn_norm;
  FeedForwardParams<T> ffn;
};

template <typename T>
struct TransformerParams {
  Matrix<T> src_embed;  // |S| x d
  Matrix<T> tgt_embed;  // |V| x d
  std::vector<EncoderLayerParams<T>> encoder;
  NormParams<T> encoder_norm;
  std::vector<DecoderLayerParams<T>> decoder;
  NormParams<T> decoder_norm;
  LinearParams<T> output;  // d x |V|

  // Every tensor in a fixed order.
  std::vector<Matrix<T>*> tensors();
  std::vector<const Matrix<T>*> tensors() const;
  std::size_t parameter_count() const;
  // Same shapes, all zeros.
  TransformerParams zeros_like() const;
  void set_zero();
  void add_scaled(const TransformerParams& other, T scale);

  template <typename U>
  TransformerParams<U> cast() const;
};

template <typename T>
template <typename U>
TransformerParams<U> TransformerParams<T>::cast() const {
  TransformerParams<U> out;
  out.encoder.resize(encoder.size());
  out.decoder.resize(decoder.size());
  auto dst = out.tensors();
  auto src = tensors();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
  return out;
}

template <typename T>
struct NormCache {
  Matrix<T> normalized;
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
};

template <typename T>
struct AttentionCache {
  Matrix<T> query_in, kv_in;
  Matrix<T> q, k, v;
  std::vector<Matrix<T>> probs;  // per head
  Matrix<T> context;
};

template <typename T>
struct FeedForwardCache {
  Matrix<T> input;
  Matrix<T> pre_activation;
  Matrix<T> hidden;  // after ReLU and dropout
  Matrix<T> dropout_mask;
};

template <typename T>
struct EncoderLayerCache {
  NormCache<T> attn_norm;
  AttentionCache<T> attn;
  Matrix<T> attn_mask;
  NormCache<T> ffn_norm;
  FeedForwardCache<T> ffn;
  Matrix<T> ffn_mask;
};

template <typename T>
struct DecoderLayerCache {
  NormCache<T> self_norm;
  AttentionCache<T> self_attn;
  Matrix<T> self_mask;
  NormCache<T> cross_norm;
  AttentionCache<T> cross_attn;
  Matrix<T> cross_mask;
  NormCache<T> ffn_norm;
  FeedForwardCache<T> ffn;
  Matrix<T> ffn_mask;
};

// Per-pass activations retained for the backward pass. Empty dropout masks
// mean the pass ran deterministically.
template <typename T>
struct ForwardCache {
  std::vector<int> src;
  std::vector<int> tgt_in;
  Matrix<T> src_embed_mask;
  Matrix<T> tgt_embed_mask;
  std::vector<EncoderLayerCache<T>> encoder;
  NormCache<T> encoder_norm;
  Matrix<T> memory;
  std::vector<DecoderLayerCache<T>> decoder;
  NormCache<T> decoder_norm;
  Matrix<T> decoder_out;
};

// Key/value state for incremental decoding of one hypothesis.
template <typename T>
struct DecoderState {
  std::vector<Matrix<T>> self_keys;    // per layer, t x d
  std::vector<Matrix<T>> self_values;  // per layer, t x d
  std::vector<Matrix<T>> cross_keys;   // per layer, src x d
  std::vector<Matrix<T>> cross_values;
  int position = 0;
};

// Pre-norm encoder-decoder transformer with sinusoidal positions, untied
// embeddings and hand-written backpropagation.
template <typename T>
class Transformer {
 public:
  Transformer(const TransformerConfig& config, std::size_t src_vocab, std::size_t tgt_vocab);

  const TransformerConfig& config() const { return config_; }
  std::size_t src_vocab_size() const { return src_vocab_; }
  std::size_t tgt_vocab_size() const { return tgt_vocab_; }
  TransformerParams<T>& params() { return params_; }
  const TransformerParams<T>& params() const { return params_; }

  void initialize(std::uint64_t seed);

  // Teacher-forced logits, one row per entry of `tgt_in` (which starts with
  // BOS). Dropout is applied iff `dropout` is non-null. When `cache` is given
  // it receives what backward() needs.
  Matrix<T> forward(std::span<const int> src, std::span<const int> tgt_in, DropoutSampler* dropout,
                    ForwardCache<T>* cache) const;

  // Accumulates parameter gradients for d(loss)/d(logits) into `grads`.
  void backward(const ForwardCache<T>& cache, const Matrix<T>& dlogits, TransformerParams<T>& grads) const;

  // Encoder output after the final norm; deterministic.
  Matrix<T> encode(std::span<const int> src) const;
  DecoderState<T> start_decoding(const Matrix<T>& memory) const;
  // Feeds `token` at the state's next position and returns log-probabilities
  // for the following token.
  Eigen::Matrix<T, 1, Eigen::Dynamic> step(DecoderState<T>& state, int token) const;

 private:
  TransformerConfig config_;
  std::size_t src_vocab_;
  std::size_t tgt_vocab_;
  TransformerParams<T> params_;
  Matrix<T> positions_;  // max_len x d
};

// Row-wise log-softmax.
template <typename T>
Matrix<T> log_softmax_rows(const Matrix<T>& logits);

extern template struct TransformerParams<float>;
extern template struct TransformerParams<double>;
extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace s3lg
